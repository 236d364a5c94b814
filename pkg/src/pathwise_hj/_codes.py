"""Integer codes shared by the kernel backends."""

HK_EIKONAL = 0
HK_QUADRATIC = 1
HK_SMOOTH = 2
HK_LINEAR = 3
HK_CONCAVE = 4

FK_NONE = 0
FK_LINEAR = 1
FK_DEGENERATE = 2

SCHEME_LF1 = 0
SCHEME_LF2 = 1
SCHEME_UPWIND = 2
SCHEME_TK = 3
