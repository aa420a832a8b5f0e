"""Independent reference computations shared by the test modules."""


def newton_uniaxial_root(a, c, s0=1.0):
    """Nonzero root of a + (2c/3) s^2 = 0 by scalar Newton iteration on a s + (2c/3) s^3."""
    s = s0
    for _ in range(60):
        g = a * s + (2 * c / 3) * s**3
        dg = a + 2 * c * s**2
        s -= g / dg
    return s
