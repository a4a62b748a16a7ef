from setuptools import setup

setup(
    name="idim",
    version="0.1.0",
    packages=["idim", "idim_cli"],
    package_dir={"": "src"},
    install_requires=[
        "numpy",
        "scipy",
        "pandas>=1.5",
        "tqdm",
        "python-dotenv",
        "typer>=0.4,<0.10",
        "click<8.1.0",
    ],
    extras_require={"fast": ["numba"], "test": ["pytest", "scikit-learn"]},
    entry_points={
        "console_scripts": ["idim=idim_cli.cli:main"],
    },
)
