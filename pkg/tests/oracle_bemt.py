"""Independent scalar BEM implementation used only as a test oracle.

Written straight from the momentum/blade-element balance with plain Python
floats and loops, before the vectorised solver, so the two share nothing but
the model definition (geometry, polar formula, Glauert relation, cosine yaw
model).  Keep it dumb and readable; speed does not matter here.
"""

import math


def interp_table(x, xs, ys):
    if x <= xs[0]:
        return ys[0]
    if x >= xs[-1]:
        return ys[-1]
    lo, hi = 0, len(xs) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    t = (x - xs[lo]) / (xs[hi] - xs[lo])
    return ys[lo] + t * (ys[hi] - ys[lo])


def tip_loss(r, radius, blades, phi):
    s = abs(math.sin(phi))
    if s < 1e-12:
        return 1e-9
    f = blades * (radius - r) / (2.0 * r * s)
    return max((2.0 / math.pi) * math.acos(math.exp(-min(f, 500.0))), 1e-9)


def glauert_root(k):
    """Root of 4a - 5a^2 + 3a^3 = 4k(1-a)^2 on [0, 1], by plain bisection."""
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        res = 4 * mid - 5 * mid**2 + 3 * mid**3 - 4 * k * (1 - mid) ** 2
        if res > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def annulus_induction(u, omega, r, chord, twist_deg, pitch_deg, radius, blades,
                      alpha_tab, cl_tab, cd_tab, relax=0.5, tol=1e-8,
                      max_iter=2000):
    """Solve one annulus; returns (a, ap, alpha_deg, phi, cn, ct, F, converged)."""
    sigma = blades * chord / (2.0 * math.pi * r)
    a, ap = 0.0, 0.0
    converged = False
    w = relax  # halved on update-direction flips, like the main solver
    prev_da = prev_dap = 0.0
    for _ in range(max_iter):
        ut = u * (1.0 - a)
        ur = omega * r * (1.0 + ap)
        phi = math.atan2(ut, ur)
        alpha = math.degrees(phi) - twist_deg - pitch_deg
        cl = interp_table(alpha, alpha_tab, cl_tab)
        cd = interp_table(alpha, alpha_tab, cd_tab)
        cn = cl * math.cos(phi) + cd * math.sin(phi)
        ct = cl * math.sin(phi) - cd * math.cos(phi)
        F = tip_loss(r, radius, blades, phi)
        sphi2 = max(math.sin(phi) ** 2, 1e-12)
        k = sigma * cn / (4.0 * F * sphi2)
        k = max(k, -0.49)
        a_new = k / (1.0 + k)
        if a_new > 1.0 / 3.0:  # Glauert curve meets 4a(1-a) at a = 1/3
            a_new = glauert_root(max(k, 0.0))
        a_new = min(max(a_new, -0.5), 0.999)
        kp = sigma * ct / (4.0 * F * max(math.sin(phi) * math.cos(phi), 1e-12))
        kp = min(kp, 0.99)
        ap_new = min(max(kp / (1.0 - kp), -0.5), 5.0)
        da, dap = a_new - a, ap_new - ap
        if max(abs(da), abs(dap)) < tol:
            converged = True
            break
        if da * prev_da < 0 or dap * prev_dap < 0:
            w = max(w * 0.5, relax / 4096.0)
        else:
            w = min(w * 1.25, relax)
        a += w * da
        ap += w * dap
        prev_da, prev_dap = da, dap
    a_ret, ap_ret = a, ap
    ut = u * (1.0 - a_ret)
    ur = omega * r * (1.0 + ap_ret)
    phi = math.atan2(ut, ur)
    alpha = math.degrees(phi) - twist_deg - pitch_deg
    cl = interp_table(alpha, alpha_tab, cl_tab)
    cd = interp_table(alpha, alpha_tab, cd_tab)
    cn = cl * math.cos(phi) + cd * math.sin(phi)
    ct = cl * math.sin(phi) - cd * math.cos(phi)
    F = tip_loss(r, radius, blades, phi)
    return a_ret, ap_ret, alpha, phi, cn, ct, F, converged


def rotor_cp(u, yaw_deg, pitch_deg, rpm, radii, chords, twists_deg, radius,
             blades, alpha_tab, cl_tab, cd_tab):
    """Scalar rotor Cp/Ct with the cosine yaw model and trapezoidal spanwise
    integration over the given stations."""
    omega = rpm * math.pi / 30.0
    cosg = math.cos(math.radians(yaw_deg))
    u_eff = max(u * cosg, 1e-6)
    dcp, dct, alphas = [], [], []
    all_conv = True
    for r, c, tw in zip(radii, chords, twists_deg):
        a, ap, alpha, phi, cn, ct, F, conv = annulus_induction(
            u_eff, omega, r, c, tw, pitch_deg, radius, blades,
            alpha_tab, cl_tab, cd_tab)
        all_conv = all_conv and conv
        ut = u_eff * (1.0 - a)
        ur = omega * r * (1.0 + ap)
        w2 = ut * ut + ur * ur
        dct.append(blades * c * w2 * cn / (math.pi * radius**2 * u_eff**2))
        dcp.append(blades * omega * c * w2 * ct * r / (math.pi * radius**2 * u_eff**3))
        alphas.append(alpha)
    cp = 0.0
    ct_tot = 0.0
    for i in range(len(radii) - 1):
        dr = radii[i + 1] - radii[i]
        cp += 0.5 * (dcp[i] + dcp[i + 1]) * dr
        ct_tot += 0.5 * (dct[i] + dct[i + 1]) * dr
    cp = max(cp * cosg**3, 0.0)
    ct_tot = max(ct_tot * cosg**2, 0.0)
    return cp, ct_tot, alphas, all_conv


def oracle_tables(cfg):
    """Pull plain-Python geometry/polar lists out of a RotorConfig."""
    radii = [s.r for s in cfg.sections]
    chords = [s.chord for s in cfg.sections]
    twists = [s.twist for s in cfg.sections]
    polar = cfg.polars[cfg.sections[0].polar_id]
    return (radii, chords, twists, cfg.radius, cfg.blade_count,
            list(polar.alpha_deg), list(polar.cl), list(polar.cd))


def oracle_cp(cfg, u, yaw_deg, pitch_deg, rpm):
    radii, chords, twists, radius, blades, at, clt, cdt = oracle_tables(cfg)
    return rotor_cp(u, yaw_deg, pitch_deg, rpm, radii, chords, twists, radius,
                    blades, at, clt, cdt)
