# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel core.

Inner loops release the GIL, which is what lets worker threads scale on
multiple cores.  Arithmetic is written as plain IEEE double expressions
(the build disables FP contraction) so results match the pure-Python
per-cell reference operation for operation.
"""

from libc.math cimport sqrt, fabs
from libc.stdint cimport int32_t, int64_t, uint64_t

BACKEND_NAME = "compiled"


# ---------------------------------------------------------------------------
# hardware timestamp

cdef extern from *:
    """
    #if defined(__x86_64__) || defined(__i386__)
    static unsigned long long octask_hw_ticks(void) {
        unsigned int lo, hi;
        __asm__ __volatile__("rdtsc" : "=a"(lo), "=d"(hi));
        return ((unsigned long long)hi << 32) | lo;
    }
    #define OCTASK_HW_TICKS 1
    #elif defined(__riscv)
    static unsigned long long octask_hw_ticks(void) {
        unsigned long long v;
        __asm__ __volatile__("rdtime %0" : "=r"(v));
        return v;
    }
    #define OCTASK_HW_TICKS 1
    #elif defined(__aarch64__)
    static unsigned long long octask_hw_ticks(void) {
        unsigned long long v;
        __asm__ __volatile__("mrs %0, cntvct_el0" : "=r"(v));
        return v;
    }
    #define OCTASK_HW_TICKS 1
    #else
    static unsigned long long octask_hw_ticks(void) { return 0; }
    #define OCTASK_HW_TICKS 0
    #endif
    """
    uint64_t octask_hw_ticks() nogil
    int OCTASK_HW_TICKS


def hw_counter_available():
    """True when this build can read a hardware cycle/time counter."""
    return OCTASK_HW_TICKS != 0


def hw_timestamp():
    """Raw hardware counter read (single instruction, no allocation)."""
    return octask_hw_ticks()


# ---------------------------------------------------------------------------
# alternating series partial sums

cdef inline double _ipow(double x, int64_t e) nogil:
    # binary exponentiation, LSB first; e >= 0
    cdef double r = 1.0
    cdef double b = x
    while e:
        if e & 1:
            r = r * b
        b = b * b
        e = e >> 1
    return r


def maclaurin_partial(double x, int64_t k_lo, int64_t k_hi):
    """Sum of (-1)^(k+1) x^k / k for k in [k_lo, k_hi), k_lo >= 1."""
    cdef double s = 0.0
    cdef double t
    cdef int64_t k
    with nogil:
        t = _ipow(x, k_lo)
        for k in range(k_lo, k_hi):
            if k & 1:
                s = s + t / k
            else:
                s = s - t / k
            t = t * x
    return s


# ---------------------------------------------------------------------------
# gravity: direct pairwise sums and monopole tree walk

def direct_potential(double[::1] tx, double[::1] ty, double[::1] tz,
                     double[::1] sx, double[::1] sy, double[::1] sz,
                     double[::1] sm, double[::1] out):
    """phi(t) = -sum_j m_j / |t - s_j|, skipping coincident points (G = 1)."""
    cdef Py_ssize_t nt = tx.shape[0]
    cdef Py_ssize_t ns = sx.shape[0]
    cdef Py_ssize_t i, j
    cdef double px, py, pz, dx, dy, dz, r2, acc
    with nogil:
        for i in range(nt):
            px = tx[i]; py = ty[i]; pz = tz[i]
            acc = 0.0
            for j in range(ns):
                dx = sx[j] - px
                dy = sy[j] - py
                dz = sz[j] - pz
                r2 = dx * dx + dy * dy + dz * dz
                if r2 > 0.0:
                    acc = acc - sm[j] / sqrt(r2)
            out[i] = acc
    return 0


def gravity_walk(double[::1] node_size,
                 double[::1] comx, double[::1] comy, double[::1] comz,
                 double[::1] node_mass,
                 int32_t[::1] first_child,
                 int64_t[::1] cell_off, int64_t[::1] cell_cnt,
                 double[::1] cx, double[::1] cy, double[::1] cz,
                 double[::1] cmass,
                 int64_t self_off,
                 double[::1] tx, double[::1] ty, double[::1] tz,
                 double theta, double[::1] out):
    """Per-cell tree walk with monopole acceptance ``size < theta * dist``.

    A node whose moment is not accepted is descended; leaves reached that
    way contribute by direct cell-cell summation.  The leaf whose cells
    start at ``self_off`` is always summed directly with the zero-distance
    pair skipped.  Children of one node are contiguous starting at
    ``first_child`` (-1 marks a leaf).
    """
    cdef Py_ssize_t nt = tx.shape[0]
    cdef Py_ssize_t i
    cdef int64_t j, off, end
    cdef int sp, c
    cdef int32_t n, fc
    cdef int32_t stack[1024]
    cdef double px, py, pz, dx, dy, dz, d2, d, acc
    cdef int overflow = 0
    with nogil:
        for i in range(nt):
            px = tx[i]; py = ty[i]; pz = tz[i]
            acc = 0.0
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                n = stack[sp]
                if node_mass[n] == 0.0:
                    continue
                fc = first_child[n]
                if fc < 0 and cell_off[n] == self_off:
                    # enclosing leaf: direct sum, skip the target cell itself
                    off = cell_off[n]
                    end = off + cell_cnt[n]
                    for j in range(off, end):
                        dx = cx[j] - px
                        dy = cy[j] - py
                        dz = cz[j] - pz
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 > 0.0:
                            acc = acc - cmass[j] / sqrt(d2)
                    continue
                dx = comx[n] - px
                dy = comy[n] - py
                dz = comz[n] - pz
                d2 = dx * dx + dy * dy + dz * dz
                d = sqrt(d2)
                if node_size[n] < theta * d:
                    acc = acc - node_mass[n] / d
                elif fc < 0:
                    off = cell_off[n]
                    end = off + cell_cnt[n]
                    for j in range(off, end):
                        dx = cx[j] - px
                        dy = cy[j] - py
                        dz = cz[j] - pz
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 > 0.0:
                            acc = acc - cmass[j] / sqrt(d2)
                else:
                    if sp + 8 > 1024:
                        overflow = 1
                        break
                    for c in range(7, -1, -1):
                        stack[sp] = fc + c
                        sp += 1
            out[i] = acc
            if overflow:
                break
    if overflow:
        raise RuntimeError("gravity walk stack overflow")
    return 0


# ---------------------------------------------------------------------------
# hydro: first-order finite-volume update, Rusanov flux, ideal gas

cdef inline double _pressure(double rho, double mx, double my, double mz,
                             double en, double gamma) nogil:
    return (gamma - 1.0) * (en - 0.5 * (mx * mx + my * my + mz * mz) / rho)


def max_signal(double[:, :, ::1] rho, double[:, :, ::1] mx,
               double[:, :, ::1] my, double[:, :, ::1] mz,
               double[:, :, ::1] en, double gamma):
    """max over cells of |u|_inf + sound speed; negative if state invalid."""
    cdef Py_ssize_t n0 = rho.shape[0], n1 = rho.shape[1], n2 = rho.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double r, am, a, p, c, s, best = 0.0
    cdef int bad = 0
    with nogil:
        for i in range(n0):
            for j in range(n1):
                for k in range(n2):
                    r = rho[i, j, k]
                    if not (r > 0.0):  # also catches NaN
                        bad = 1
                        break
                    p = _pressure(r, mx[i, j, k], my[i, j, k], mz[i, j, k],
                                  en[i, j, k], gamma)
                    if not (p > 0.0):
                        bad = 1
                        break
                    am = fabs(mx[i, j, k])
                    a = fabs(my[i, j, k])
                    if a > am:
                        am = a
                    a = fabs(mz[i, j, k])
                    if a > am:
                        am = a
                    c = sqrt(gamma * p / r)
                    s = am / r + c
                    if s > best:
                        best = s
                if bad:
                    break
            if bad:
                break
    if bad:
        return -1.0
    return best


cdef inline void _rusanov(double rl, double mxl, double myl, double mzl, double el,
                          double rr, double mxr, double myr, double mzr, double er,
                          int axis, double gamma, double* f) nogil:
    # f[0..4] = rho, mx, my, mz, E flux through the face, left-to-right normal
    cdef double pl = _pressure(rl, mxl, myl, mzl, el, gamma)
    cdef double pr = _pressure(rr, mxr, myr, mzr, er, gamma)
    cdef double ml, mr
    if axis == 0:
        ml = mxl; mr = mxr
    elif axis == 1:
        ml = myl; mr = myr
    else:
        ml = mzl; mr = mzr
    cdef double ul = ml / rl
    cdef double ur = mr / rr
    cdef double cl = sqrt(gamma * pl / rl)
    cdef double cr = sqrt(gamma * pr / rr)
    cdef double sl = fabs(ul) + cl
    cdef double sr = fabs(ur) + cr
    cdef double smax = sl if sl > sr else sr
    cdef double flr = ml
    cdef double frr = mr
    cdef double flmx = mxl * ul
    cdef double flmy = myl * ul
    cdef double flmz = mzl * ul
    cdef double frmx = mxr * ur
    cdef double frmy = myr * ur
    cdef double frmz = mzr * ur
    if axis == 0:
        flmx = flmx + pl
        frmx = frmx + pr
    elif axis == 1:
        flmy = flmy + pl
        frmy = frmy + pr
    else:
        flmz = flmz + pl
        frmz = frmz + pr
    cdef double fle = (el + pl) * ul
    cdef double fre = (er + pr) * ur
    f[0] = 0.5 * (flr + frr) - 0.5 * (smax * (rr - rl))
    f[1] = 0.5 * (flmx + frmx) - 0.5 * (smax * (mxr - mxl))
    f[2] = 0.5 * (flmy + frmy) - 0.5 * (smax * (myr - myl))
    f[3] = 0.5 * (flmz + frmz) - 0.5 * (smax * (mzr - mzl))
    f[4] = 0.5 * (fle + fre) - 0.5 * (smax * (er - el))


def hydro_update(double[:, :, ::1] rho_e, double[:, :, ::1] mx_e,
                 double[:, :, ::1] my_e, double[:, :, ::1] mz_e,
                 double[:, :, ::1] en_e, double[:, :, ::1] phi_e,
                 double gamma, double dt, double h,
                 double[:, :, ::1] rho_o, double[:, :, ::1] mx_o,
                 double[:, :, ::1] my_o, double[:, :, ::1] mz_o,
                 double[:, :, ::1] en_o):
    """One conservative update on the interior of ghost-extended blocks.

    Inputs are (N+2)^3 with a one-cell ghost shell, outputs are N^3.
    Gravity enters as a source from central differences of phi evaluated
    at the old state.  Returns 0, or 1 + row-major interior index of the
    first cell whose updated density or pressure is nonpositive.
    """
    cdef Py_ssize_t n = rho_o.shape[0]
    cdef Py_ssize_t i, j, k, ii, jj, kk
    cdef double lam = dt / h
    cdef double twoh = 2.0 * h
    cdef double fxp[5]
    cdef double fxm[5]
    cdef double fyp[5]
    cdef double fym[5]
    cdef double fzp[5]
    cdef double fzm[5]
    cdef double r, mx, my, mz, en
    cdef double gx, gy, gz
    cdef double nr, nmx, nmy, nmz, nen, np_
    cdef double d0, d1, d2, d3, d4
    cdef int64_t bad = 0
    with nogil:
        for i in range(n):
            ii = i + 1
            for j in range(n):
                jj = j + 1
                for k in range(n):
                    kk = k + 1
                    r = rho_e[ii, jj, kk]
                    mx = mx_e[ii, jj, kk]
                    my = my_e[ii, jj, kk]
                    mz = mz_e[ii, jj, kk]
                    en = en_e[ii, jj, kk]
                    _rusanov(r, mx, my, mz, en,
                             rho_e[ii + 1, jj, kk], mx_e[ii + 1, jj, kk],
                             my_e[ii + 1, jj, kk], mz_e[ii + 1, jj, kk],
                             en_e[ii + 1, jj, kk], 0, gamma, fxp)
                    _rusanov(rho_e[ii - 1, jj, kk], mx_e[ii - 1, jj, kk],
                             my_e[ii - 1, jj, kk], mz_e[ii - 1, jj, kk],
                             en_e[ii - 1, jj, kk],
                             r, mx, my, mz, en, 0, gamma, fxm)
                    _rusanov(r, mx, my, mz, en,
                             rho_e[ii, jj + 1, kk], mx_e[ii, jj + 1, kk],
                             my_e[ii, jj + 1, kk], mz_e[ii, jj + 1, kk],
                             en_e[ii, jj + 1, kk], 1, gamma, fyp)
                    _rusanov(rho_e[ii, jj - 1, kk], mx_e[ii, jj - 1, kk],
                             my_e[ii, jj - 1, kk], mz_e[ii, jj - 1, kk],
                             en_e[ii, jj - 1, kk],
                             r, mx, my, mz, en, 1, gamma, fym)
                    _rusanov(r, mx, my, mz, en,
                             rho_e[ii, jj, kk + 1], mx_e[ii, jj, kk + 1],
                             my_e[ii, jj, kk + 1], mz_e[ii, jj, kk + 1],
                             en_e[ii, jj, kk + 1], 2, gamma, fzp)
                    _rusanov(rho_e[ii, jj, kk - 1], mx_e[ii, jj, kk - 1],
                             my_e[ii, jj, kk - 1], mz_e[ii, jj, kk - 1],
                             en_e[ii, jj, kk - 1],
                             r, mx, my, mz, en, 2, gamma, fzm)
                    d0 = (fxp[0] - fxm[0]) + (fyp[0] - fym[0]) + (fzp[0] - fzm[0])
                    d1 = (fxp[1] - fxm[1]) + (fyp[1] - fym[1]) + (fzp[1] - fzm[1])
                    d2 = (fxp[2] - fxm[2]) + (fyp[2] - fym[2]) + (fzp[2] - fzm[2])
                    d3 = (fxp[3] - fxm[3]) + (fyp[3] - fym[3]) + (fzp[3] - fzm[3])
                    d4 = (fxp[4] - fxm[4]) + (fyp[4] - fym[4]) + (fzp[4] - fzm[4])
                    gx = (phi_e[ii - 1, jj, kk] - phi_e[ii + 1, jj, kk]) / twoh
                    gy = (phi_e[ii, jj - 1, kk] - phi_e[ii, jj + 1, kk]) / twoh
                    gz = (phi_e[ii, jj, kk - 1] - phi_e[ii, jj, kk + 1]) / twoh
                    nr = r - lam * d0
                    nmx = mx - lam * d1 + dt * (r * gx)
                    nmy = my - lam * d2 + dt * (r * gy)
                    nmz = mz - lam * d3 + dt * (r * gz)
                    nen = en - lam * d4 + dt * ((mx * gx + my * gy) + mz * gz)
                    if not (nr > 0.0):  # also catches NaN
                        bad = 1 + (i * n + j) * n + k
                        break
                    np_ = _pressure(nr, nmx, nmy, nmz, nen, gamma)
                    if not (np_ > 0.0):
                        bad = 1 + (i * n + j) * n + k
                        break
                    rho_o[i, j, k] = nr
                    mx_o[i, j, k] = nmx
                    my_o[i, j, k] = nmy
                    mz_o[i, j, k] = nmz
                    en_o[i, j, k] = nen
                if bad:
                    break
            if bad:
                break
    return bad
