from invdes_cli.templates.template import Template


template = """
project:
    name: {{project_name}}

# worker pool for sweeps, CEM populations and ensembles (INVDES_THREADS overrides)
threads: {{threads}}
quiet: false

model:
    width: {{model.width}}
    blocks: {{model.blocks}}
    radius: {{model.radius}}
    noise_scale: {{model.noise_scale}}
    learning_rate: {{model.learning_rate}}
    batch_size: {{model.batch_size}}

gd:
    learning_rate: {{gd.learning_rate}}
    b1: {{gd.b1}}
    b2: {{gd.b2}}
    eps: {{ "%.1e"|format(gd.eps) }}
    clip: {{gd.clip}}
    steps: {{gd.steps}}

cem:
    population: {{cem.population}}
    elite_fraction: {{cem.elite_fraction}}
    initial_sigma: {{cem.initial_sigma}}
    smoothing: {{cem.smoothing}}
    sigma_reference: {{cem.sigma_reference}}
    steps: {{cem.steps}}
"""


class ConfigTemplate(Template):
    def __init__(self, project_name: str, threads: int, model: dict, gd: dict, cem: dict):
        template_vars = {
            'project_name': project_name,
            'threads': threads,
            'model': model,
            'gd': gd,
            'cem': cem,
        }
        super().__init__(template_str=template, template_vars=template_vars)
