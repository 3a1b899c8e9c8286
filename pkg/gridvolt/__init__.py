# -*- coding: utf-8 -*-
"""
    gridvolt
    ~~~~~~~~

    The package Grid-Volt.

    Safe and stable volt-var control of radial distribution feeders. See:

        * :mod:`gridvolt.simulation` for the front-end of the closed loop,
        * :mod:`gridvolt.network` and :mod:`gridvolt.feeders` for the grid model,
        * :mod:`gridvolt.steady_state` for the steady-state optimization problem,
        * :mod:`gridvolt.policy` and :mod:`gridvolt.controller` for the controllers,
        * :mod:`gridvolt.stability` for the stability certificate,
        * :mod:`gridvolt.training` for the training of the transient policy,
        * :mod:`gridvolt.converter` and :mod:`gridvolt.cli` for files and the command line,
        * :mod:`gridvolt.parameters` for the parameters.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

__version__ = '1.0'
