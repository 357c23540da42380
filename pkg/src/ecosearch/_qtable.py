"""Critical values of the studentized range distribution at alpha = 0.05.

q(0.05; k groups, df error degrees of freedom), the standard upper-tail
table used for pairwise mean comparisons. Lookups between tabulated rows
interpolate linearly in 1/df, which is the classical recipe and accurate
to about three decimals across the table.
"""

from __future__ import annotations

DFS = (2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 24, 30, 40, 60, 120)

TABLE = {
    2: (6.0849, 4.5007, 3.9265, 3.6354, 3.4605, 3.3441, 3.2612, 3.1992, 3.1511,
        3.1127, 3.0813, 3.0552, 3.0332, 3.0143, 2.9980, 2.9837, 2.9712, 2.9600,
        2.9500, 2.9188, 2.8882, 2.8582, 2.8288, 2.8000),
    3: (8.3308, 5.9096, 5.0402, 4.6017, 4.3392, 4.1649, 4.0410, 3.9485, 3.8768,
        3.8196, 3.7729, 3.7341, 3.7014, 3.6734, 3.6491, 3.6280, 3.6093, 3.5927,
        3.5779, 3.5317, 3.4864, 3.4421, 3.3987, 3.3561),
    4: (9.7980, 6.8245, 5.7571, 5.2183, 4.8956, 4.6813, 4.5288, 4.4149, 4.3266,
        4.2561, 4.1987, 4.1509, 4.1105, 4.0760, 4.0461, 4.0200, 3.9970, 3.9766,
        3.9583, 3.9013, 3.8454, 3.7907, 3.7371, 3.6846),
    5: (10.8811, 7.5017, 6.2870, 5.6731, 5.3049, 5.0601, 4.8858, 4.7554, 4.6543,
        4.5736, 4.5077, 4.4529, 4.4066, 4.3670, 4.3327, 4.3027, 4.2763, 4.2528,
        4.2319, 4.1663, 4.1021, 4.0391, 3.9774, 3.9169),
    6: (11.7343, 8.0371, 6.7064, 6.0329, 5.6284, 5.3591, 5.1672, 5.0235, 4.9120,
        4.8230, 4.7502, 4.6897, 4.6385, 4.5947, 4.5568, 4.5237, 4.4944, 4.4685,
        4.4452, 4.3727, 4.3015, 4.2316, 4.1632, 4.0960),
    7: (12.4349, 8.4783, 7.0526, 6.3299, 5.8953, 5.6057, 5.3991, 5.2444, 5.1242,
        5.0281, 4.9496, 4.8842, 4.8290, 4.7816, 4.7406, 4.7048, 4.6731, 4.6450,
        4.6199, 4.5413, 4.4642, 4.3885, 4.3141, 4.2412),
    8: (13.0273, 8.8525, 7.3465, 6.5823, 6.1222, 5.8153, 5.5962, 5.4319, 5.3042,
        5.2021, 5.1187, 5.0491, 4.9903, 4.9399, 4.8962, 4.8580, 4.8243, 4.7944,
        4.7676, 4.6838, 4.6014, 4.5205, 4.4411, 4.3630),
    9: (13.5390, 9.1766, 7.6015, 6.8014, 6.3192, 5.9973, 5.7673, 5.5947, 5.4605,
        5.3531, 5.2653, 5.1921, 5.1301, 5.0770, 5.0310, 4.9907, 4.9552, 4.9236,
        4.8954, 4.8069, 4.7199, 4.6345, 4.5504, 4.4678),
    10: (13.9885, 9.4620, 7.8263, 6.9947, 6.4931, 6.1579, 5.9183, 5.7384, 5.5984,
         5.4863, 5.3946, 5.3181, 5.2534, 5.1979, 5.1498, 5.1077, 5.0705, 5.0375,
         5.0079, 4.9152, 4.8241, 4.7345, 4.6463, 4.5595),
}

INFINITE_DF = {
    2: 2.7718, 3: 3.3145, 4: 3.6332, 5: 3.8577, 6: 4.0301,
    7: 4.1696, 8: 4.2863, 9: 4.3865, 10: 4.4741,
}


def q_crit(k: int, df: int) -> float:
    """Critical value q(0.05; k, df); linear interpolation in 1/df."""
    if k not in TABLE:
        raise ValueError(f"critical-value table covers 2..10 groups, got {k}")
    if df < 2:
        raise ValueError(f"need at least 2 error degrees of freedom, got {df}")
    row = TABLE[k]
    if df >= DFS[-1]:
        # interpolate toward the infinite-df limit
        upper = INFINITE_DF[k]
        lower = row[-1]
        t = (1.0 / df) / (1.0 / DFS[-1])
        return upper + (lower - upper) * t
    for i, tab_df in enumerate(DFS):
        if df == tab_df:
            return row[i]
        if df < tab_df:
            lo_df, hi_df = DFS[i - 1], tab_df
            lo_q, hi_q = row[i - 1], row[i]
            t = (1.0 / df - 1.0 / hi_df) / (1.0 / lo_df - 1.0 / hi_df)
            return hi_q + (lo_q - hi_q) * t
    raise AssertionError("unreachable")
