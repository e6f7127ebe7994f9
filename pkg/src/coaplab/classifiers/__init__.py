"""The five detectors: naive Bayes, decision tree, random forest, linear SVM, LSTM."""

from .bayes import GaussianNB, nb_fit, nb_predict
from .data import DatasetError, FeatureDataset, train_test_split
from .lstm import LstmModel, lstm_fit, lstm_forward, lstm_predict
from .metrics import ConfusionMatrix, evaluate
from .svm import DivergenceError, LinearSVM, svm_fit, svm_predict
from .tree import DecisionTree, RandomForest, forest_fit, forest_predict, tree_fit, tree_predict

__all__ = [
    "ConfusionMatrix", "DatasetError", "DecisionTree", "DivergenceError", "FeatureDataset",
    "GaussianNB", "LinearSVM", "LstmModel", "RandomForest", "evaluate", "forest_fit",
    "forest_predict", "lstm_fit", "lstm_forward", "lstm_predict", "nb_fit", "nb_predict",
    "svm_fit", "svm_predict", "train_test_split", "tree_fit", "tree_predict",
]
