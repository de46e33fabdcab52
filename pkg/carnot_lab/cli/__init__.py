from carnot_lab.cli.config import SUITES, ConfigError, DomainConfig, ExperimentConfig, MapConfig, config_from_dict, load_config
from carnot_lab.cli.run import Report, run
from carnot_lab.cli.zoo import list_zoo, make_field, make_group, make_map
