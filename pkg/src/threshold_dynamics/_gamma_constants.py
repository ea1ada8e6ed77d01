"""Fourth-row coefficients of the stable second-order 4-stage scheme.

Generated by scripts/regen_gamma_constants.py; do not edit by hand.
"""

GAMMA_40 = "-7.34033543439081004002631576036904861307235659797659435390455e-1"
GAMMA_42 = "-7.29315245185576697021848155936505914272723168662514153300625e-1"
GAMMA_43 = "1.96334878862465770102447973197341077557995882846017358869108"
