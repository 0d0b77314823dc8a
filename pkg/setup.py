"""Setup script for cscfuse."""

from setuptools import setup, find_packages

setup(
    name="cscfuse",
    version="0.1.0",
    packages=find_packages(include=["cscfuse", "cscfuse.*"]),
    install_requires=[
        "click>=8.1.0",
        "numpy>=1.23.0",
        "pandas>=2.0.0",
        "Pillow>=9.0.0",
        "pyyaml>=6.0.0",
        "scipy>=1.9.0",
    ],
    entry_points={
        "console_scripts": [
            "cscfuse=cscfuse.cli.main:cli",
        ],
    },
)
