//! Printed reference values checked by the acceptance suite.

/// `(L, M, #params, width)` as printed.
pub type Row = (u64, u64, u64, u64);

/// IGC blocks near 4672 parameters.
pub const IGC_4672: [Row; 9] = [
    (1, 23, 4784, 23),
    (2, 16, 4672, 32),
    (3, 13, 4680, 39),
    (5, 10, 4750, 50),
    (6, 9, 4698, 54),
    (12, 6, 4752, 72),
    (28, 3, 4620, 84),
    (40, 2, 4640, 80),
    (64, 1, 4672, 64),
];

/// IGC blocks near 17536 parameters.
pub const IGC_17536: [Row; 11] = [
    (1, 44, 17468, 44),
    (2, 31, 17422, 63),
    (4, 22, 17776, 88),
    (12, 12, 17280, 144),
    (14, 11, 17402, 154),
    (23, 8, 17480, 184),
    (28, 7, 17836, 196),
    (41, 5, 17630, 205),
    (64, 3, 17472, 192),
    (85, 2, 17510, 170),
    (128, 1, 17536, 128),
];

/// GPC blocks near 4672 parameters.
pub const GPC_4672: [Row; 8] = [
    (1, 22, 4840, 22),
    (2, 15, 4950, 30),
    (3, 12, 5184, 36),
    (5, 8, 4480, 40),
    (10, 5, 4750, 50),
    (19, 3, 4788, 54),
    (30, 2, 4680, 60),
    (64, 1, 4672, 64),
];

/// GPC blocks near 17536 parameters.
pub const GPC_17536: [Row; 10] = [
    (1, 42, 17640, 42),
    (2, 28, 17248, 56),
    (3, 22, 17424, 66),
    (6, 14, 17820, 84),
    (11, 9, 17640, 99),
    (15, 7, 17496, 105),
    (18, 6, 17632, 108),
    (29, 4, 17640, 116),
    (62, 2, 17608, 124),
    (128, 1, 17532, 128),
];

/// Network depths `3B + 2`.
pub const DEPTHS: [usize; 5] = [8, 20, 38, 62, 98];

/// Per network: `(params in millions, FLOPs in units of 1e8)` at each depth.
pub const NETWORK_BUDGETS: [(&str, [(f64, f64); 5]); 4] = [
    (
        "RegConv-W16",
        [
            (0.075, 0.122),
            (0.27, 0.406),
            (0.56, 0.830),
            (0.95, 1.40),
            (1.53, 2.25),
        ],
    ),
    (
        "RegConv-W18",
        [
            (0.095, 0.154),
            (0.34, 0.513),
            (0.71, 1.05),
            (1.20, 1.77),
            (1.93, 2.84),
        ],
    ),
    (
        "IGC-L4M8",
        [
            (0.078, 0.131),
            (0.27, 0.424),
            (0.57, 0.862),
            (0.96, 1.45),
            (1.56, 2.32),
        ],
    ),
    (
        "IGC-L24M2",
        [
            (0.047, 0.099),
            (0.15, 0.288),
            (0.31, 0.571),
            (0.52, 0.948),
            (0.83, 1.51),
        ],
    ),
];
