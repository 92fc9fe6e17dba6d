# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled chain kernel; mirrors ``_pykernel.py`` operation for operation."""

from libc.math cimport log, exp, pow, INFINITY
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport int64_t, uint64_t

import numpy as np

cdef double NEG_INF = -INFINITY
cdef double TARGET_ACCEPT = 0.44


cdef inline uint64_t mix64(int64_t code, int64_t count) noexcept nogil:
    cdef uint64_t z = <uint64_t>code * <uint64_t>1000003 + <uint64_t>count
    z = z + <uint64_t>0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double xlog(double k, double v) noexcept nogil:
    if k == 0:
        return 0.0
    if v <= 0.0:
        return NEG_INF
    return k * log(v)


cdef inline int bit_length(int64_t v) noexcept nogil:
    cdef int n = 0
    while v > 0:
        v >>= 1
        n += 1
    return n


cdef inline int popcount(int64_t v) noexcept nogil:
    cdef int n = 0
    while v:
        n += <int>(v & 1)
        v >>= 1
    return n


cdef class ChainKernel:
    cdef public str backend
    cdef int T
    cdef double[::1] lf
    cdef int64_t[::1] M, m, mstar
    cdef double const_a
    cdef double[::1] phi, p, free, log_step
    cdef int64_t[::1] phi_group, p_group
    cdef double alpha, prior_a, prior_b
    cdef int n_theta1, n_free, estimate_alpha, update_theta, adapt, burnin
    cdef int algorithm, x_steps, update_x
    cdef int64_t[:, ::1] basis
    cdef int64_t[::1] theta_accepted, theta_proposed
    cdef public long x_proposed, x_accepted, x_empty, iteration
    # slots
    cdef int64_t *codes
    cdef int64_t *counts
    cdef int64_t *m0
    cdef int64_t *m1
    cdef int64_t *m2
    cdef int64_t *m3
    cdef int n_slots, cap
    # summaries
    cdef int64_t[::1] alive, seen, missed, last, e
    cdef double slf, cjs, err
    cdef uint64_t hash
    cdef double[:, ::1] err_table
    cdef double[:, ::1] err_scratch
    cdef double[::1] chi, phi_s, p_s, free_s, terms

    def __cinit__(self):
        self.codes = NULL
        self.counts = NULL
        self.m0 = NULL
        self.m1 = NULL
        self.m2 = NULL
        self.m3 = NULL
        self.n_slots = 0
        self.cap = 0

    def __dealloc__(self):
        free(self.codes)
        free(self.counts)
        free(self.m0)
        free(self.m1)
        free(self.m2)
        free(self.m3)

    def __init__(self, spec):
        cdef int T, i, t, count
        cdef int64_t code
        self.backend = "cython"
        T = self.T = int(spec.T)
        self.lf = np.ascontiguousarray(spec.log_fact, dtype=np.float64)
        self.M = np.ascontiguousarray(spec.M, dtype=np.int64)
        self.m = np.ascontiguousarray(spec.m, dtype=np.int64)
        self.mstar = np.minimum(np.asarray(self.m), np.asarray(self.M) - np.asarray(self.m)).astype(np.int64)
        self.const_a = 0.0
        for a in spec.releases:
            self.const_a += self.lf[int(a)]
        self.phi = np.array(spec.phi, dtype=np.float64)
        self.p = np.array(spec.p, dtype=np.float64)
        self.alpha = float(spec.alpha)
        self.phi_group = np.ascontiguousarray(spec.phi_group, dtype=np.int64)
        self.p_group = np.ascontiguousarray(spec.p_group, dtype=np.int64)
        self.free = np.array(spec.free, dtype=np.float64)
        self.n_theta1 = int(spec.n_theta1)
        self.n_free = len(spec.free)
        self.estimate_alpha = bool(spec.estimate_alpha)
        self.prior_a = float(spec.alpha_prior[0])
        self.prior_b = float(spec.alpha_prior[1])
        self.update_theta = bool(spec.update_theta)
        self.log_step = np.array(spec.log_step, dtype=np.float64)
        self.adapt = bool(spec.adapt)
        self.burnin = int(spec.burnin)
        self.algorithm = int(spec.algorithm)
        basis = np.ascontiguousarray(spec.basis_codes, dtype=np.int64).reshape(-1, 4)
        self.basis = basis
        self.x_steps = int(spec.x_steps)
        self.update_x = bool(spec.update_x)
        self.theta_accepted = np.zeros(self.n_free, dtype=np.int64)
        self.theta_proposed = np.zeros(self.n_free, dtype=np.int64)
        self.x_proposed = 0
        self.x_accepted = 0
        self.x_empty = 0
        self.iteration = 0

        self.alive = np.zeros(T - 1, dtype=np.int64)
        self.seen = np.zeros(T - 1, dtype=np.int64)
        self.missed = np.zeros(T - 1, dtype=np.int64)
        self.last = np.zeros(T, dtype=np.int64)
        self.e = np.zeros(T - 1, dtype=np.int64)
        self.chi = np.zeros(T, dtype=np.float64)
        self.phi_s = np.zeros(T - 1, dtype=np.float64)
        self.p_s = np.zeros(T - 1, dtype=np.float64)
        self.free_s = np.zeros(max(self.n_free, 1), dtype=np.float64)
        width = int(np.max(np.asarray(self.mstar))) + 1 if T > 1 else 1
        self.err_table = np.zeros((T - 1, width), dtype=np.float64)
        self.err_scratch = np.zeros((T - 1, width), dtype=np.float64)
        self.terms = np.zeros(width, dtype=np.float64)
        self.slf = 0.0
        self.hash = 0
        self._reserve(len(spec.codes) + 16)
        for code_obj, count_obj in zip(spec.codes, spec.counts):
            code = int(code_obj)
            count = int(count_obj)
            if count <= 0:
                continue
            i = self._get_or_add(code)
            self.counts[i] = count
            self._summary(code, count)
            self.slf += self.lf[count]
            self.hash = self.hash + mix64(code, count)
            for t in range(2, T + 1):
                if (self.m2[i] >> t) & 1:
                    self.e[t - 2] += count

        self._error_table(self.alpha, self.err_table)
        self.cjs = self._cjs_ll(self.phi, self.p)
        self.err = 0.0
        for i in range(T - 1):
            self.err += self._err_at(self.err_table, i, self.e[i])

    # -- slots ---------------------------------------------------------------
    cdef int _reserve(self, int need) except -1:
        cdef int cap
        if need <= self.cap:
            return 0
        cap = max(need, 2 * self.cap)
        self.codes = <int64_t *>realloc(self.codes, cap * sizeof(int64_t))
        self.counts = <int64_t *>realloc(self.counts, cap * sizeof(int64_t))
        self.m0 = <int64_t *>realloc(self.m0, cap * sizeof(int64_t))
        self.m1 = <int64_t *>realloc(self.m1, cap * sizeof(int64_t))
        self.m2 = <int64_t *>realloc(self.m2, cap * sizeof(int64_t))
        self.m3 = <int64_t *>realloc(self.m3, cap * sizeof(int64_t))
        if (self.codes == NULL or self.counts == NULL or self.m0 == NULL
                or self.m1 == NULL or self.m2 == NULL or self.m3 == NULL):
            raise MemoryError()
        self.cap = cap
        return 0

    cdef inline int _find(self, int64_t code) noexcept:
        cdef int i
        for i in range(self.n_slots):
            if self.codes[i] == code:
                return i
        return -1

    cdef int _get_or_add(self, int64_t code) except -1:
        cdef int i = self._find(code)
        if i >= 0:
            return i
        cdef int T = self.T
        cdef int mark = T - (bit_length(code) - 1) // 2
        cdef int64_t b0 = 0, b1 = 0, b2 = 0, b3 = 0
        cdef int t, ev
        for t in range(mark + 1, T + 1):
            ev = (code >> (2 * (T - t))) & 3
            if ev == 0:
                b0 |= (<int64_t>1) << t
            elif ev == 1:
                b1 |= (<int64_t>1) << t
            elif ev == 2:
                b2 |= (<int64_t>1) << t
            else:
                b3 |= (<int64_t>1) << t
        self._reserve(self.n_slots + 1)
        i = self.n_slots
        self.codes[i] = code
        self.counts[i] = 0
        self.m0[i] = b0
        self.m1[i] = b1
        self.m2[i] = b2
        self.m3[i] = b3
        self.n_slots += 1
        return i

    cdef void _compact(self) noexcept:
        cdef int live = 0, i, j = 0
        for i in range(self.n_slots):
            if self.counts[i] > 0:
                live += 1
        if self.n_slots - live <= live + 8:
            return
        for i in range(self.n_slots):
            if self.counts[i] > 0:
                self.codes[j] = self.codes[i]
                self.counts[j] = self.counts[i]
                self.m0[j] = self.m0[i]
                self.m1[j] = self.m1[i]
                self.m2[j] = self.m2[i]
                self.m3[j] = self.m3[i]
                j += 1
        self.n_slots = j

    # -- model pieces ----------------------------------------------------------
    cdef void _summary(self, int64_t code, int64_t d) noexcept:
        cdef int T = self.T
        cdef int first = T - (bit_length(code) - 1) // 2
        cdef int lst = first, t, ev
        for t in range(first + 1, T + 1):
            ev = (code >> (2 * (T - t))) & 3
            if ev == 1 or ev == 2:
                lst = t
        for t in range(first, lst):
            self.alive[t - 1] += d
            ev = (code >> (2 * (T - t - 1))) & 3
            if ev == 1 or ev == 2:
                self.seen[t - 1] += d
            else:
                self.missed[t - 1] += d
        self.last[lst - 1] += d

    cdef double _cjs_ll(self, double[::1] phi, double[::1] p) noexcept:
        cdef int T = self.T, t
        cdef double ll = 0.0
        self.chi[T - 1] = 1.0
        for t in range(T - 2, -1, -1):
            self.chi[t] = (1.0 - phi[t]) + phi[t] * (1.0 - p[t]) * self.chi[t + 1]
        for t in range(T - 1):
            ll += xlog(<double>self.alive[t], phi[t])
            ll += xlog(<double>self.seen[t], p[t])
            ll += xlog(<double>self.missed[t], 1.0 - p[t])
        for t in range(T):
            ll += xlog(<double>self.last[t], self.chi[t])
        return ll

    cdef inline double _lchoose(self, int64_t n, int64_t k) noexcept:
        return self.lf[n] - self.lf[k] - self.lf[n - k]

    cdef void _error_table(self, double alpha, double[:, ::1] table) noexcept:
        cdef int i, k
        cdef int64_t m, M, ms
        cdef double top, s, norm, v
        for i in range(self.T - 1):
            m = self.m[i]
            M = self.M[i]
            ms = self.mstar[i]
            for k in range(ms + 1):
                self.terms[k] = self._lchoose(m, k) + xlog(<double>k, 1.0 - alpha) + xlog(<double>(m - k), alpha)
            top = NEG_INF
            for k in range(ms + 1):
                if self.terms[k] > top:
                    top = self.terms[k]
            if top == NEG_INF:
                for k in range(ms + 1):
                    table[i, k] = NEG_INF
                continue
            s = 0.0
            for k in range(ms + 1):
                s += exp(self.terms[k] - top)
            norm = top + log(s)
            for k in range(ms + 1):
                table[i, k] = self.terms[k] - norm - self._lchoose(M - m, k) - self._lchoose(m, k)

    cdef inline double _err_at(self, double[:, ::1] table, int i, int64_t e) noexcept:
        if e < 0 or e > self.mstar[i]:
            return NEG_INF
        return table[i, e]

    cpdef double log_joint(self):
        return self.const_a - self.slf + self.cjs + self.err

    # -- theta -----------------------------------------------------------------
    cdef void _update_theta(self, double[:, ::1] normals, double[:, ::1] unifs, int row, long it_global) noexcept:
        cdef int f, t, i
        cdef double cur, y, prop, new_cjs, diff, new_err
        cdef bint accepted
        cdef double[:, ::1] swap
        for f in range(self.n_free):
            cur = self.free[f]
            y = log(cur / (1.0 - cur)) + exp(self.log_step[f]) * normals[row, f]
            prop = 1.0 / (1.0 + exp(-y))
            self.theta_proposed[f] += 1
            accepted = False
            if 0.0 < prop < 1.0:
                if f < self.n_theta1:
                    for i in range(self.n_free):
                        self.free_s[i] = self.free[i]
                    self.free_s[f] = prop
                    for t in range(self.T - 1):
                        self.phi_s[t] = self.free_s[self.phi_group[t]]
                        self.p_s[t] = self.free_s[self.p_group[t]]
                    new_cjs = self._cjs_ll(self.phi_s, self.p_s)
                    diff = (new_cjs - self.cjs + log(prop) + log(1.0 - prop)
                            - log(cur) - log(1.0 - cur))
                    if log(unifs[row, f]) < diff:
                        accepted = True
                        self.free[f] = prop
                        for t in range(self.T - 1):
                            self.phi[t] = self.phi_s[t]
                            self.p[t] = self.p_s[t]
                        self.cjs = new_cjs
                else:
                    self._error_table(prop, self.err_scratch)
                    new_err = 0.0
                    for i in range(self.T - 1):
                        new_err += self._err_at(self.err_scratch, i, self.e[i])
                    diff = (new_err - self.err
                            + self.prior_a * log(prop) + self.prior_b * log(1.0 - prop)
                            - self.prior_a * log(cur) - self.prior_b * log(1.0 - cur))
                    if log(unifs[row, f]) < diff:
                        accepted = True
                        self.free[f] = prop
                        self.alpha = prop
                        swap = self.err_table
                        self.err_table = self.err_scratch
                        self.err_scratch = swap
                        self.err = new_err
            if accepted:
                self.theta_accepted[f] += 1
            if self.adapt and it_global < self.burnin:
                self.log_step[f] += ((1.0 if accepted else 0.0) - TARGET_ACCEPT) * pow(it_global + 1.0, -0.6)

    # -- x moves -------------------------------------------------------------
    cdef inline void _apply(self, int i, int64_t code, int64_t d) noexcept:
        self.counts[i] += d
        self._summary(code, d)

    cdef inline void _rehash(self, int64_t code, int64_t old, int64_t new) noexcept:
        if old > 0:
            self.hash = self.hash - mix64(code, old)
        if new > 0:
            self.hash = self.hash + mix64(code, new)

    cdef inline bint _member(self, int64_t *masks, int i, int64_t bit) noexcept:
        if self.counts[i] <= 0:
            return False
        if bit:
            return (masks[i] & bit) != 0
        return masks[i] != 0

    cdef int _count(self, int64_t *masks, int64_t bit) noexcept:
        cdef int n = 0, i
        for i in range(self.n_slots):
            if self._member(masks, i, bit):
                n += 1
        return n

    cdef int _pick(self, int64_t *masks, int64_t bit, double u, int *n_out) noexcept:
        cdef int n = self._count(masks, bit), k, i
        n_out[0] = n
        if n == 0:
            return -1
        k = <int>(u * n)
        if k >= n:
            k = n - 1
        for i in range(self.n_slots):
            if self._member(masks, i, bit):
                if k == 0:
                    return i
                k -= 1
        return -1

    cdef int _occasion(self, int64_t mask, double u, int *n_out) noexcept:
        cdef int n = popcount(mask), k, t
        n_out[0] = n
        k = <int>(u * n)
        if k >= n:
            k = n - 1
        t = 0
        while True:
            if (mask >> t) & 1:
                if k == 0:
                    return t
                k -= 1
            t += 1

    cdef int _x_step_dynamic(self, double[::1] u) except -1:
        cdef int T = self.T
        cdef bint add = u[0] < 0.5
        cdef int i_a, i_b, i_c, i_d, n1, n2, n3, r1, r2, r3, s, slot
        cdef int64_t unit, ca, cb, cc, cd, xa, xb, xc, xd, e_old, e_new
        cdef double fwd, rev, d_lf, d_err, new_cjs, log_ratio
        self.x_proposed += 1
        if add:
            i_a = self._pick(self.m0, 0, u[1], &n1)
        else:
            i_a = self._pick(self.m2, 0, u[1], &n1)
        if i_a < 0:
            self.x_empty += 1
            return 0
        s = self._occasion(self.m0[i_a] if add else self.m2[i_a], u[2], &n2)
        i_b = self._pick(self.m1 if add else self.m3, (<int64_t>1) << s, u[3], &n3)
        if i_b < 0:
            self.x_empty += 1
            return 0
        fwd = -log(<double>n1) - log(<double>n2) - log(<double>n3)
        unit = (<int64_t>2) << (2 * (T - s))
        ca = self.codes[i_a]
        cb = self.codes[i_b]
        if add:
            cc = ca + unit
            cd = cb + unit
        else:
            cc = ca - unit
            cd = cb - unit
        i_c = self._get_or_add(cc)
        i_d = self._get_or_add(cd)
        xa = self.counts[i_a]
        xb = self.counts[i_b]
        xc = self.counts[i_c]
        xd = self.counts[i_d]
        d_lf = log(<double>xa) + log(<double>xb) - log(<double>(xc + 1)) - log(<double>(xd + 1))
        self._apply(i_a, ca, -1)
        self._apply(i_b, cb, -1)
        self._apply(i_c, cc, 1)
        self._apply(i_d, cd, 1)
        slot = s - 2
        e_old = self.e[slot]
        e_new = e_old + 1 if add else e_old - 1
        self.e[slot] = e_new
        d_err = self._err_at(self.err_table, slot, e_new) - self.err_table[slot, e_old]
        new_cjs = self._cjs_ll(self.phi, self.p)
        if add:
            r1 = self._count(self.m2, 0)
            r2 = popcount(self.m2[i_c])
            r3 = self._count(self.m3, (<int64_t>1) << s)
        else:
            r1 = self._count(self.m0, 0)
            r2 = popcount(self.m0[i_c])
            r3 = self._count(self.m1, (<int64_t>1) << s)
        rev = -log(<double>r1) - log(<double>r2) - log(<double>r3)
        log_ratio = d_lf + (new_cjs - self.cjs) + d_err + rev - fwd
        if log(u[4]) < log_ratio:
            self.x_accepted += 1
            self.cjs = new_cjs
            self.err += d_err
            self.slf -= d_lf
            self._rehash(ca, xa, xa - 1)
            self._rehash(cb, xb, xb - 1)
            self._rehash(cc, xc, xc + 1)
            self._rehash(cd, xd, xd + 1)
        else:
            self._apply(i_a, ca, 1)
            self._apply(i_b, cb, 1)
            self._apply(i_c, cc, -1)
            self._apply(i_d, cd, -1)
            self.e[slot] = e_old
        return 0

    cdef int _x_step_fixed(self, double[::1] u) except -1:
        cdef int nb = self.basis.shape[0], k, t, i_a, i_b, i_c, i_d, slot
        cdef int64_t c0, c1, c2, c3, ma, mb, pc, pd, xa, xb, xc, xd, e_old, e_new
        cdef double d_lf, d_err, new_cjs, log_ratio
        cdef bint add
        self.x_proposed += 1
        k = <int>(u[1] * nb)
        if k >= nb:
            k = nb - 1
        c0 = self.basis[k, 0]
        c1 = self.basis[k, 1]
        c2 = self.basis[k, 2]
        c3 = self.basis[k, 3]
        t = self.T - (bit_length((c2 - c0) >> 1) - 1) // 2
        add = u[0] < 0.5
        if add:
            ma = c0
            mb = c1
            pc = c2
            pd = c3
        else:
            ma = c2
            mb = c3
            pc = c0
            pd = c1
        i_a = self._find(ma)
        i_b = self._find(mb)
        if i_a < 0 or i_b < 0 or self.counts[i_a] == 0 or self.counts[i_b] == 0:
            return 0
        i_c = self._get_or_add(pc)
        i_d = self._get_or_add(pd)
        xa = self.counts[i_a]
        xb = self.counts[i_b]
        xc = self.counts[i_c]
        xd = self.counts[i_d]
        d_lf = log(<double>xa) + log(<double>xb) - log(<double>(xc + 1)) - log(<double>(xd + 1))
        self._apply(i_a, ma, -1)
        self._apply(i_b, mb, -1)
        self._apply(i_c, pc, 1)
        self._apply(i_d, pd, 1)
        slot = t - 2
        e_old = self.e[slot]
        e_new = e_old + 1 if add else e_old - 1
        self.e[slot] = e_new
        d_err = self._err_at(self.err_table, slot, e_new) - self.err_table[slot, e_old]
        new_cjs = self._cjs_ll(self.phi, self.p)
        log_ratio = d_lf + (new_cjs - self.cjs) + d_err
        if log(u[4]) < log_ratio:
            self.x_accepted += 1
            self.cjs = new_cjs
            self.err += d_err
            self.slf -= d_lf
            self._rehash(ma, xa, xa - 1)
            self._rehash(mb, xb, xb - 1)
            self._rehash(pc, xc, xc + 1)
            self._rehash(pd, xd, xd + 1)
        else:
            self._apply(i_a, ma, 1)
            self._apply(i_b, mb, 1)
            self._apply(i_c, pc, -1)
            self._apply(i_d, pd, -1)
            self.e[slot] = e_old
        return 0

    # -- driver ----------------------------------------------------------------
    def advance(self, int n_iter, double[:, ::1] normals, double[:, ::1] theta_unifs,
                double[:, :, ::1] x_unifs, double[:, ::1] out_theta, int64_t[::1] out_errors,
                double[::1] out_logjoint, int64_t[:, ::1] out_xerrors, uint64_t[:, ::1] out_xhash):
        cdef int T = self.T, row, step, t
        cdef int64_t tot
        for row in range(n_iter):
            if self.update_theta and self.n_free:
                self._update_theta(normals, theta_unifs, row, self.iteration)
            if self.update_x:
                for step in range(self.x_steps):
                    self._compact()
                    if self.algorithm == 0:
                        self._x_step_dynamic(x_unifs[row, step])
                    else:
                        self._x_step_fixed(x_unifs[row, step])
                    tot = 0
                    for t in range(T - 1):
                        tot += self.e[t]
                    out_xerrors[row, step] = tot
                    out_xhash[row, step] = self.hash
            for t in range(T - 1):
                out_theta[row, t] = self.phi[t]
                out_theta[row, T - 1 + t] = self.p[t]
            out_theta[row, 2 * T - 2] = self.alpha
            tot = 0
            for t in range(T - 1):
                tot += self.e[t]
            out_errors[row] = tot
            out_logjoint[row] = self.log_joint()
            self.iteration += 1

    # -- inspection ------------------------------------------------------------
    def support(self):
        cdef int i
        codes, counts = [], []
        for i in range(self.n_slots):
            if self.counts[i] > 0:
                codes.append(self.codes[i])
                counts.append(self.counts[i])
        return codes, counts

    def counters(self):
        return {
            "x_proposed": self.x_proposed,
            "x_accepted": self.x_accepted,
            "x_empty": self.x_empty,
            "theta_proposed": [int(v) for v in self.theta_proposed],
            "theta_accepted": [int(v) for v in self.theta_accepted],
            "log_step": [float(v) for v in self.log_step],
            "free": [float(v) for v in self.free],
            "errors": [int(v) for v in self.e],
            "iteration": self.iteration,
        }

    @property
    def hash_value(self):
        return int(self.hash)
