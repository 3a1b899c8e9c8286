# -*- coding: utf-8 -*-
"""
    gridvolt.parameters
    ~~~~~~~~~~~~~~~~~~~

    The module :mod:`gridvolt.parameters` defines the constant parameters.

    All electrical quantities are per-unit (p.u.); ``v`` always denotes a squared voltage
    magnitude. Times are expressed in sampling steps unless stated otherwise.

    :copyright: Copyright 2024-2026 Grid-Volt developers, see AUTHORS.
    :license: CeCILL-C, see LICENSE for details.

"""

# Network
V0 = 1.0                    #: Squared voltage magnitude at the substation (p.u.)
V_NOM = 1.0                 #: Nominal squared voltage magnitude of a bus (p.u.)
V_LO = 0.95                 #: Lower edge of the safe squared-voltage band (p.u.)
V_HI = 1.05                 #: Upper edge of the safe squared-voltage band (p.u.)
Q_RATIO = 0.45              #: Reactive capacity of an inverter as a fraction of its active rating, q_max = Q_RATIO * p_bar (dimensionless)
P_BAR = 1.0                 #: Active power rating of a shipped inverter (p.u.)
ETA = 0.1                   #: Cost coefficient of reactive power (dimensionless)

# Shipped feeders
FEEDER_SEED = 2023          #: Seed of the synthetic line impedances
FEEDER_IMPEDANCE_RANGE = (0.01, 0.1)  #: Range of the uniform draw of r and x before rescaling (p.u.)
FEEDER_X_SCALE = 0.8        #: Largest eigenvalue of X restricted to the controlled buses after rescaling (p.u.)
FEEDER_R_OVER_X = 1.0       #: Mean r/x ratio of the synthetic lines (dimensionless)

# Steady-state optimization
PGD_TOL = 1e-8              #: Tolerance on the sup-norm of the projected-gradient fixed-point residual (p.u.)
PGD_MAX_ITER = 100000       #: Maximal number of projected-gradient iterations
PGD_STEP_FRACTION = 0.9     #: Default step as a fraction of the step-size bound 2 / lambda_max(C_q + X) (dimensionless)
MAX_ORACLE_VARIABLES = 12   #: Maximal number of free variables of the exhaustive active-set oracle

# Transient policy
N_UNITS = 8                 #: Number of ReLU units per branch
C_FRACTION = 0.5            #: Fraction c of the output bound c * alpha * (q' - q) (dimensionless)
EPSILON = 0.1               #: Capacity margin: q'_max = q_max * (1 - EPSILON) (dimensionless)

# Safe controller
ALPHA = 0.5                 #: Gain of the barrier class function (step-1)
H = 1.0                     #: Sampling period (s)
FEASIBILITY_TOL = 1e-12     #: Tolerance on q outside its box before a state is declared infeasible (p.u.)
CLIPPING_WARNING = 0.5      #: Fraction of clipped steps above which alpha is reported as possibly too small
CBF_ORACLE_TOL = 1e-10      #: Tolerance of the iterative CBF-QP oracle

# Simulation
DISCOUNT = 0.99             #: Discount factor of the transient cost (dimensionless)
HORIZON = 100               #: Episode length t_f (steps)
CONVERGENCE_TOL = 1e-6      #: Threshold on the sup-norm of the last control rate to declare convergence (p.u. step-1)
DISTURBANCE_RANGE = (0.05, 0.15)  #: Range of the relative disturbance of v_env (dimensionless)
N_SCENARIOS = 100           #: Default number of scenarios of a benchmark

# Stability certificate
N_CERT_SAMPLES = 1000       #: Number of sampled states of a certificate
CERT_VOLTAGE_BOX = 0.15     #: Half width of the uniform voltage box sampled around v_nom (relative)
CERT_REDRAW_ROUNDS = 100    #: Maximal number of rounds redrawing the states a certificate could not evaluate
LEMMA_TOL = 1e-10           #: Tolerance of the descent inequality on sampled states

# Training
TRAINING_EPISODES = 200     #: Number of training episodes N_ep
TRAINING_STEPS = 100        #: Number of steps per training episode N_step
BATCH_SIZE = 64             #: Mini-batch size of the actor-critic trainer (transitions per bus)
ACTOR_STEP = 1e-3           #: Step size of the actor update
CRITIC_STEP = 1e-3          #: Step size of the critic update (Adam)
CRITIC_WIDTH = 32           #: Number of hidden units of the critic
BUFFER_CAPACITY = 100000    #: Capacity of a per-bus replay buffer (transitions)
EXPLORATION_NOISE = 0.05    #: Standard deviation of the exploration noise, relative to the rate bound (dimensionless)
PERTURBATION_SCALE = 0.1    #: Standard deviation of the zeroth-order parameter perturbations
ZO_STEP = 0.05              #: Step size of the zeroth-order update
ZO_DIRECTIONS = 4           #: Number of antithetic directions per zeroth-order update
SCENARIO_BATCH = 8          #: Number of scenarios per zeroth-order evaluation
HELD_OUT_SCENARIOS = 20     #: Number of held-out scenarios of the training check
HELD_OUT_SUCCESS = 0.8      #: Fraction of held-out scenarios that must improve on the initial policy

# Files
FLOAT_FORMAT = '%.17g'      #: Format of the floats written in the output files
THREADS_ENV_VAR = 'GRIDVOLT_NUM_THREADS'  #: Environment variable overriding the number of worker threads
