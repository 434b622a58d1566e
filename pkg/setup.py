import re
from pathlib import Path
from setuptools import setup, find_packages

this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text()
version = re.search(
    r'__version__ = "(.+)"', (this_directory / "otalign" / "__init__.py").read_text()
).group(1)

setup(
    name="otalign",
    version=version,
    description="Sparse and interpretable alignments with constrained optimal transport",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="BSD 3-Clause",
    classifiers=[
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: BSD License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Text Processing :: Linguistic",
    ],
    packages=find_packages(),
    package_data={"otalign.tests": ["data/*", "presets/*"]},
    entry_points={
        "console_scripts": [
            "otalign = otalign.wrapper:cmd",
        ],
    },
    install_requires=[
        "numpy",
        "scipy",
        "regex",
        "appdirs",
        "matplotlib",
    ],
    test_suite="nose.collector",
    tests_require=[
        "nose",
        "mock",
        "hypothesis",
    ],
    python_requires=">=3.8",
    zip_safe=False,
)
