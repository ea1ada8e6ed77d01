"""Regenerate ``_gamma_constants.py`` from the closed-form radicals.

Run from the repository root::

    python scripts/regen_gamma_constants.py > src/threshold_dynamics/_gamma_constants.py
"""
import mpmath as mp

DIGITS = 60

RADICAND_COEF = 73547857887405865499600064
RADICAND_SQRT = 133495318877644714344377
RADICAND_SHIFT = 23474745371243059566207357648855848671


def exact_fourth_row(dps=DIGITS):
    with mp.workdps(dps + 20):
        a = mp.mpf(RADICAND_COEF) * mp.sqrt(RADICAND_SQRT) - RADICAND_SHIFT
        c = mp.cbrt(a)
        g42 = (c - mp.mpf(5551049511730043591353151) / c - 456109196575) / 3627134098848
        g43 = (
            -5586815667458 * c
            + c**2
            + mp.mpf(31012690382968488487137089701456460158) / c
            + mp.mpf(30814150681678355363112149018994128529535197628801) / c**2
            + 7974522440634228925392639
        ) / mp.mpf(18386964471851466374900016)
        g40 = 1 - mp.mpf(1) / 2 - g42 - g43
        return g40, g42, g43


def main():
    g40, g42, g43 = exact_fourth_row()
    print('"""Fourth-row coefficients of the stable second-order 4-stage scheme.')
    print()
    print("Generated by scripts/regen_gamma_constants.py; do not edit by hand.")
    print('"""')
    print()
    for name, value in (("GAMMA_40", g40), ("GAMMA_42", g42), ("GAMMA_43", g43)):
        print(f'{name} = "{mp.nstr(value, DIGITS, min_fixed=-1, max_fixed=1)}"')


if __name__ == "__main__":
    main()
