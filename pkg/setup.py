from setuptools import setup, find_packages

version = {}
with open("invdes_cli/__version__.py") as fp:
    exec(fp.read(), version)

setup(
    name='invdes-cli',
    version=version['__version__'],
    packages=find_packages(exclude=['tests', 'tests.*']),
    include_package_data=True,
    python_requires='>=3.10',
    install_requires=[
        'click',
        'numpy',
        'python-dotenv',
        'termcolor',
        'Jinja2',
        'PyYAML',
    ],
    extras_require={
        'test': ['pytest'],
    },
    entry_points={
        'console_scripts': [
            'invdes=invdes_cli:cli',
        ],
    },
)
