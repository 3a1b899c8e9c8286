# -*- coding: utf-8 -*-
import logging
import os

from gridvolt import converter, feeders, simulation
from gridvolt.controller import Variant
from gridvolt.policy import init_policy

"""
    main
    ~~~~

    An example to show how to:

        * initialize and run the model Grid-Volt for the three controllers,
        * format the outputs of Grid-Volt.

    You must first install :mod:`gridvolt` and its dependencies
    before running this script with the command `python`.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

# gridvolt inputs
NETWORK_FILEPATH = os.path.join('inputs', 'network.json')  # the 13-bus feeder is used if missing
CHECKPOINT_FILEPATH = os.path.join('inputs', 'policy.json')  # the initial policy is used if missing
N_SCENARIOS = 20

# gridvolt outputs
OUTPUTS_DIRPATH = 'outputs'
METRICS_OUTPUTS_FILENAME = 'metrics_{}.csv'
TRAJECTORY_OUTPUTS_FILENAME = 'trajectory_{}.csv'

if __name__ == '__main__':

    logging.basicConfig(level=logging.INFO)

    network = converter.load_network(NETWORK_FILEPATH) if os.path.isfile(NETWORK_FILEPATH) else feeders.ieee13_like()
    if os.path.isfile(CHECKPOINT_FILEPATH):
        policy = converter.load_checkpoint(CHECKPOINT_FILEPATH, network)
    else:
        policy = init_policy(network)
    scenarios = simulation.generate_scenarios(network, 'high', count=N_SCENARIOS, seed=0)

    if not os.path.isdir(OUTPUTS_DIRPATH):
        os.makedirs(OUTPUTS_DIRPATH)

    for variant in Variant:
        # Create the simulation
        simulation_ = simulation.Simulation(update_parameters={'ALPHA': 0.5})
        # initialize the simulation with the inputs
        simulation_.initialize({'network': network, 'variant': variant, 'policy': policy, 'scenarios': scenarios})
        # run the simulation
        simulation_.run()
        # convert the outputs to Pandas dataframes and write them to CSV
        converter.to_csv(converter.metrics_to_dataframe(simulation_.outputs['metrics']),
                         os.path.join(OUTPUTS_DIRPATH, METRICS_OUTPUTS_FILENAME.format(variant.value)))
        converter.to_csv(converter.trajectory_to_dataframe(simulation_.outputs['trajectories'][0]),
                         os.path.join(OUTPUTS_DIRPATH, TRAJECTORY_OUTPUTS_FILENAME.format(variant.value)))
        print(variant.value, simulation.aggregate_metrics(simulation_.outputs['metrics']))
