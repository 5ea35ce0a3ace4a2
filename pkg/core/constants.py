APP_NAME = "kgap"

# AP 可行性容差：实例构造器以 1e-9 精度二分求解 AP = 1
FEASIBILITY_TOL = 1e-7

# 虚拟价值单调性检查的相对容差（有限差分噪声）
REGULARITY_TOL = 1e-9

# Pmf 归一化容差
PMF_SUM_TOL = 1e-12

# 默认积分容差
DEFAULT_QUAD_TOL = 1e-9

# Φ 迭代次数上限
MAX_PHI_APPLICATIONS = 10**6

# k ≤ 24 的四位小数参考值：(gap, c_k)
KNOWN_GAP_VALUES = {
    1: (1.6449, 0.6449),
    2: (1.4445, 0.6287),
    3: (1.3575, 0.6192),
    4: (1.3065, 0.6130),
    5: (1.2721, 0.6085),
    6: (1.2470, 0.6050),
    7: (1.2276, 0.6023),
    8: (1.2121, 0.6000),
    9: (1.1994, 0.5982),
    10: (1.1886, 0.5965),
    11: (1.1794, 0.5951),
    12: (1.1714, 0.5939),
    13: (1.1644, 0.5928),
    14: (1.1581, 0.5918),
    15: (1.1525, 0.5909),
    16: (1.1475, 0.5901),
    17: (1.1429, 0.5894),
    18: (1.1387, 0.5887),
    19: (1.1349, 0.5881),
    20: (1.1313, 0.5875),
    21: (1.1281, 0.5878),
    22: (1.1250, 0.5865),
    23: (1.1221, 0.5860),
    24: (1.1195, 0.5855),
}

# c_21 与相邻项不单调，比较时放宽
SUSPECT_C_K = {21}

# k ∈ {1,2,3} 时 1 + V(Q⁻¹(k)) 的参考值
KNOWN_EAR_AP_BOUNDS = {1: 2.7184, 2: 3.7897, 3: 4.8111}
