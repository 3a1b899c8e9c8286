# -*- coding: utf-8 -*-
import sys
from setuptools import setup, find_packages

import gridvolt

"""
    Setup script for installation.

    See README.rst for installing procedure.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

if sys.version_info < (3, 8):
    print('ERROR: Grid-Volt requires at least Python 3.8 to run.')
    sys.exit(1)

setup(
    name="Grid-Volt",
    version=gridvolt.__version__,
    packages=find_packages(exclude=['test', 'example']),

    install_requires=['numpy>=1.20', 'scipy>=1.6', 'pandas>=1.2', 'networkx>=2.5', 'torch>=1.12'],
    extras_require={'test': ['pytest>=6.0']},
    include_package_data=True,
    entry_points={'console_scripts': ['gridvolt = gridvolt.cli:main']},

    # metadata for upload to PyPI
    author="Grid-Volt developers",
    description="Safe and stable volt-var control on radial distribution feeders",
    long_description="Decentralized reactive power control of radial feeders combining a learned monotone "
                     "transient policy, a steady-state gradient flow and a control barrier function safety filter",
    license="CeCILL-C",
    keywords="volt-var control, distribution grid, reactive power, control barrier function, reinforcement learning, stability",
)
