from setuptools import setup, find_packages
from pathlib import Path

# Read README
readme = Path("README.md").read_text(encoding="utf-8")

# Read requirements
requirements = Path("requirements.txt").read_text().splitlines()
requirements = [r for r in requirements if r and not r.startswith("#")]

setup(
    name="sawstrip",
    version="0.1.0",
    author="sawstrip developers",
    description="Transfer-matrix enumeration of adsorbing self-avoiding walks in strips",
    long_description=readme,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"sawstrip.data.tables": ["*.csv", "SHA256SUMS"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Physics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.10",
    install_requires=requirements,
    extras_require={
        "dev": ["pytest>=7.4", "hypothesis>=6.92"],
    },
    entry_points={
        "console_scripts": [
            "sawstrip=sawstrip.cli.main:app",
        ],
    },
    include_package_data=True,
    zip_safe=False,
)
