//! Precomputed quadrature tables.
#![allow(clippy::excessive_precision)]

/// 20-point generalized Gauss rule on [0, 1], exact for `t^j` and
/// `t^j log t` with `0 <= j < 20`. Obtained by Newton continuation on the
/// moment equations in 40-digit arithmetic; pairs are `(node, weight)`.
pub(crate) static LOG_GAUSS_20: [(f64, f64); 20] = [
    (3.52330453033381e-05, 0.00013449967646774993),
    (0.0005260939825173779, 0.0010347769229505587),
    (0.0025875195405812602, 0.0033772636772330354),
    (0.007934471948379988, 0.007673556193594308),
    (0.018682888137444807, 0.014205496285541437),
    (0.037097673369748924, 0.022984438463207902),
    (0.06531248867401905, 0.033736360557712806),
    (0.10504850471154756, 0.04591476307345133),
    (0.15735969181899806, 0.058740479942803236),
    (0.22243006276745012, 0.07126501316110143),
    (0.2994437656540949, 0.08245180897758288),
    (0.3865424469438768, 0.09126820151638738),
    (0.4808764538267847, 0.09677971590916169),
    (0.5787479322055025, 0.09823814334009033),
    (0.6758354758400338, 0.09515530305403047),
    (0.7674824608725614, 0.0873556504104583),
    (0.849025253970318, 0.07500277721227262),
    (0.9161337032416633, 0.05859729580823445),
    (0.9651354279002552, 0.03894725054961197),
    (0.9933035364569541, 0.0171372052681061),
];
