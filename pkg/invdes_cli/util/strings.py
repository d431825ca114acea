import re


def to_snake_case(string: str) -> str:
    """
    Converts a string to snake_case

    Args:
        string (str): The string to convert, e.g. an ablation name like 'rollout-length'.

    Returns:
        str: The converted snake_case string.
    """
    string = re.sub(r'(?<!^)(?=[A-Z])', '_', string).lower()
    string = re.sub(r'[\s-]', '_', string).lower()
    return string


def parse_grid(grid: str) -> list[float]:
    """
    Parse a sweep grid such as "25,50,100" or "10 20 40" into numbers.

    Integers stay integers so they can be used as step counts or sizes.
    """
    values = []
    for token in re.split(r'[,\s]+', grid.strip()):
        if not token:
            continue
        number = float(token)
        values.append(int(number) if number.is_integer() else number)
    if not values:
        raise ValueError(f"empty grid: {grid!r}")
    return values
