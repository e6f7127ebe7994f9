import pytest

from coaplab import traffic, windows


@pytest.fixture(scope="session")
def desk_run():
    """Default one-hour coordinated scenario: (config, packets, attack log)."""
    cfg = traffic.desk_scale_config()
    packets, events = traffic.run_scenario(cfg)
    return cfg, packets, events


@pytest.fixture(scope="session")
def desk_labeled(desk_run):
    cfg, packets, _ = desk_run
    return windows.label_dataset(packets, cfg.malicious_ips)
