from .config_template import ConfigTemplate
