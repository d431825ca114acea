from jinja2 import Environment, StrictUndefined


class Template:
    def __init__(self, template_str: str, template_vars: dict):
        self.env = Environment(undefined=StrictUndefined, keep_trailing_newline=True)
        self.template_str = template_str  # Template stored as a string
        self.template_vars = template_vars

    def render(self) -> str:
        template = self.env.from_string(self.template_str)
        return template.render(self.template_vars).lstrip()
