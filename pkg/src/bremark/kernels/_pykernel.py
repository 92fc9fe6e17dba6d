"""Pure-Python chain kernel.

Line-for-line twin of ``_ckernel.pyx``: same state layout, same order of
floating-point operations and the same consumption of the pre-drawn random
buffers, so both backends produce identical chains for identical inputs.

Latent histories are held as integer codes (base-4 numerals, occasion 1 most
significant) in *slots*.  A slot keeps its count and four occasion bitmasks:
``m0`` occasions after marking with event 0, ``m1`` occasions after marking
with event 1, ``m2``/``m3`` occasions with event 2/3.  Slots whose count drops
to zero are kept until the next compaction so that a rejected proposal
restores the exact slot order.
"""

import math

MASK64 = (1 << 64) - 1
TARGET_ACCEPT = 0.44
NEG_INF = -math.inf


def mix64(code, count):
    """splitmix64 finaliser of (code, count); summed over slots to hash x."""
    z = (code * 1000003 + count) & MASK64
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def xlog(k, v):
    if k == 0:
        return 0.0
    if v <= 0.0:
        return NEG_INF
    return k * math.log(v)


def _log(v):
    return math.log(v) if v > 0.0 else NEG_INF


class ChainKernel:
    """Mutable chain state plus the ``advance`` loop."""

    backend = "python"

    def __init__(self, spec):
        T = self.T = int(spec.T)
        self.lf = [float(v) for v in spec.log_fact]
        self.M = [int(v) for v in spec.M]
        self.m = [int(v) for v in spec.m]
        self.mstar = [min(a, b - a) for a, b in zip(self.m, self.M)]
        self.const_a = 0.0
        for a in spec.releases:
            self.const_a += self.lf[int(a)]

        self.phi = [float(v) for v in spec.phi]
        self.p = [float(v) for v in spec.p]
        self.alpha = float(spec.alpha)
        self.phi_group = [int(v) for v in spec.phi_group]
        self.p_group = [int(v) for v in spec.p_group]
        self.free = [float(v) for v in spec.free]
        self.n_theta1 = int(spec.n_theta1)
        self.n_free = len(self.free)
        self.estimate_alpha = bool(spec.estimate_alpha)
        self.prior_a = float(spec.alpha_prior[0])
        self.prior_b = float(spec.alpha_prior[1])
        self.update_theta = bool(spec.update_theta)
        self.log_step = [float(v) for v in spec.log_step]
        self.adapt = bool(spec.adapt)
        self.burnin = int(spec.burnin)
        self.algorithm = int(spec.algorithm)
        self.basis = [tuple(int(c) for c in row) for row in spec.basis_codes]
        self.x_steps = int(spec.x_steps)
        self.update_x = bool(spec.update_x)
        self.theta_accepted = [0] * self.n_free
        self.theta_proposed = [0] * self.n_free
        self.x_proposed = 0
        self.x_accepted = 0
        self.x_empty = 0
        self.iteration = 0

        self.codes, self.counts = [], []
        self.m0, self.m1, self.m2, self.m3 = [], [], [], []
        self.alive = [0] * (T - 1)
        self.seen = [0] * (T - 1)
        self.missed = [0] * (T - 1)
        self.last = [0] * T
        self.e = [0] * (T - 1)
        self.slf = 0.0
        self.hash = 0
        for code, count in zip(spec.codes, spec.counts):
            code, count = int(code), int(count)
            if count <= 0:
                continue
            i = self._get_or_add(code)
            self.counts[i] = count
            self._summary(code, count)
            self.slf += self.lf[count]
            self.hash = (self.hash + mix64(code, count)) & MASK64
            for t in range(2, T + 1):
                if (self.m2[i] >> t) & 1:
                    self.e[t - 2] += count

        self.err_table = self._error_table(self.alpha)
        self.cjs = self._cjs_ll(self.phi, self.p)
        self.err = 0.0
        for i in range(T - 1):
            self.err += self._err_at(self.err_table, i, self.e[i])

    # -- slots ---------------------------------------------------------------
    def _find(self, code):
        for i in range(len(self.codes)):
            if self.codes[i] == code:
                return i
        return -1

    def _get_or_add(self, code):
        i = self._find(code)
        if i >= 0:
            return i
        T = self.T
        mark = T - (code.bit_length() - 1) // 2
        b0 = b1 = b2 = b3 = 0
        for t in range(mark + 1, T + 1):
            ev = (code >> (2 * (T - t))) & 3
            if ev == 0:
                b0 |= 1 << t
            elif ev == 1:
                b1 |= 1 << t
            elif ev == 2:
                b2 |= 1 << t
            else:
                b3 |= 1 << t
        self.codes.append(code)
        self.counts.append(0)
        self.m0.append(b0)
        self.m1.append(b1)
        self.m2.append(b2)
        self.m3.append(b3)
        return len(self.codes) - 1

    def _compact(self):
        live = 0
        for c in self.counts:
            if c > 0:
                live += 1
        if len(self.counts) - live <= live + 8:
            return
        keep = [i for i in range(len(self.counts)) if self.counts[i] > 0]
        for name in ("codes", "counts", "m0", "m1", "m2", "m3"):
            arr = getattr(self, name)
            setattr(self, name, [arr[i] for i in keep])

    # -- model pieces ----------------------------------------------------------
    def _summary(self, code, d):
        T = self.T
        first = T - (code.bit_length() - 1) // 2
        lst = first
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

    def _cjs_ll(self, phi, p):
        T = self.T
        chi = [0.0] * T
        chi[T - 1] = 1.0
        for t in range(T - 2, -1, -1):
            chi[t] = (1.0 - phi[t]) + phi[t] * (1.0 - p[t]) * chi[t + 1]
        ll = 0.0
        for t in range(T - 1):
            ll += xlog(self.alive[t], phi[t])
            ll += xlog(self.seen[t], p[t])
            ll += xlog(self.missed[t], 1.0 - p[t])
        for t in range(T):
            ll += xlog(self.last[t], chi[t])
        return ll

    def _lchoose(self, n, k):
        return self.lf[n] - self.lf[k] - self.lf[n - k]

    def _error_table(self, alpha):
        table = []
        for i in range(self.T - 1):
            m, M, ms = self.m[i], self.M[i], self.mstar[i]
            terms = []
            for k in range(ms + 1):
                terms.append(self._lchoose(m, k) + xlog(k, 1.0 - alpha) + xlog(m - k, alpha))
            top = NEG_INF
            for v in terms:
                if v > top:
                    top = v
            if top == NEG_INF:
                table.append([NEG_INF] * (ms + 1))
                continue
            s = 0.0
            for v in terms:
                s += math.exp(v - top)
            norm = top + math.log(s)
            row = []
            for k in range(ms + 1):
                row.append(terms[k] - norm - self._lchoose(M - m, k) - self._lchoose(m, k))
            table.append(row)
        return table

    def _err_at(self, table, i, e):
        if e < 0 or e > self.mstar[i]:
            return NEG_INF
        return table[i][e]

    def log_joint(self):
        return self.const_a - self.slf + self.cjs + self.err

    # -- theta -----------------------------------------------------------------
    def _expand(self, phi, p, free):
        for t in range(self.T - 1):
            phi[t] = free[self.phi_group[t]]
            p[t] = free[self.p_group[t]]

    def _update_theta(self, normals, unifs, row, it_global):
        for f in range(self.n_free):
            cur = self.free[f]
            y = math.log(cur / (1.0 - cur)) + math.exp(self.log_step[f]) * normals[row][f]
            prop = 1.0 / (1.0 + math.exp(-y))
            self.theta_proposed[f] += 1
            accepted = False
            if 0.0 < prop < 1.0:
                if f < self.n_theta1:
                    free = list(self.free)
                    free[f] = prop
                    phi = [0.0] * (self.T - 1)
                    p = [0.0] * (self.T - 1)
                    self._expand(phi, p, free)
                    new_cjs = self._cjs_ll(phi, p)
                    diff = (new_cjs - self.cjs + math.log(prop) + math.log(1.0 - prop)
                            - math.log(cur) - math.log(1.0 - cur))
                    if math.log(unifs[row][f]) < diff:
                        accepted = True
                        self.free[f] = prop
                        self.phi, self.p = phi, p
                        self.cjs = new_cjs
                else:
                    table = self._error_table(prop)
                    new_err = 0.0
                    for i in range(self.T - 1):
                        new_err += self._err_at(table, i, self.e[i])
                    diff = (new_err - self.err
                            + self.prior_a * math.log(prop) + self.prior_b * math.log(1.0 - prop)
                            - self.prior_a * math.log(cur) - self.prior_b * math.log(1.0 - cur))
                    if math.log(unifs[row][f]) < diff:
                        accepted = True
                        self.free[f] = prop
                        self.alpha = prop
                        self.err_table = table
                        self.err = new_err
            if accepted:
                self.theta_accepted[f] += 1
            if self.adapt and it_global < self.burnin:
                self.log_step[f] += ((1.0 if accepted else 0.0) - TARGET_ACCEPT) * (it_global + 1.0) ** -0.6

    # -- x moves -------------------------------------------------------------
    def _apply(self, i, code, d):
        old = self.counts[i]
        new = old + d
        self.counts[i] = new
        self._summary(code, d)
        return old, new

    def _rehash(self, code, old, new):
        if old > 0:
            self.hash = (self.hash - mix64(code, old)) & MASK64
        if new > 0:
            self.hash = (self.hash + mix64(code, new)) & MASK64

    def _pick(self, mask_list, bit, u):
        """Index of the k-th live slot whose mask has ``bit`` (any bit if 0)."""
        n = 0
        for i in range(len(self.codes)):
            if self.counts[i] > 0 and (mask_list[i] & bit if bit else mask_list[i]):
                n += 1
        if n == 0:
            return -1, 0
        k = int(u * n)
        if k >= n:
            k = n - 1
        for i in range(len(self.codes)):
            if self.counts[i] > 0 and (mask_list[i] & bit if bit else mask_list[i]):
                if k == 0:
                    return i, n
                k -= 1
        raise AssertionError("unreachable")

    def _count(self, mask_list, bit):
        n = 0
        for i in range(len(self.codes)):
            if self.counts[i] > 0 and (mask_list[i] & bit if bit else mask_list[i]):
                n += 1
        return n

    @staticmethod
    def _occasion(mask, u):
        bits = [t for t in range(mask.bit_length()) if (mask >> t) & 1]
        k = int(u * len(bits))
        if k >= len(bits):
            k = len(bits) - 1
        return bits[k], len(bits)

    def _x_step_dynamic(self, u):
        T = self.T
        self.x_proposed += 1
        add = u[0] < 0.5
        if add:
            i_a, n1 = self._pick(self.m0, 0, u[1])
        else:
            i_a, n1 = self._pick(self.m2, 0, u[1])
        if i_a < 0:
            self.x_empty += 1
            return
        s, n2 = self._occasion(self.m0[i_a] if add else self.m2[i_a], u[2])
        i_b, n3 = self._pick(self.m1 if add else self.m3, 1 << s, u[3])
        if i_b < 0:
            self.x_empty += 1
            return
        fwd = -math.log(n1) - math.log(n2) - math.log(n3)
        unit = 2 << (2 * (T - s))
        ca, cb = self.codes[i_a], self.codes[i_b]
        if add:
            cc, cd = ca + unit, cb + unit
        else:
            cc, cd = ca - unit, cb - unit
        i_c = self._get_or_add(cc)
        i_d = self._get_or_add(cd)
        xa, xb, xc, xd = self.counts[i_a], self.counts[i_b], self.counts[i_c], self.counts[i_d]
        d_lf = math.log(xa) + math.log(xb) - math.log(xc + 1) - math.log(xd + 1)
        self._apply(i_a, ca, -1)
        self._apply(i_b, cb, -1)
        self._apply(i_c, cc, 1)
        self._apply(i_d, cd, 1)
        slot = s - 2
        e_old = self.e[slot]
        e_new = e_old + 1 if add else e_old - 1
        self.e[slot] = e_new
        d_err = self._err_at(self.err_table, slot, e_new) - self.err_table[slot][e_old]
        new_cjs = self._cjs_ll(self.phi, self.p)
        if add:
            r1 = self._count(self.m2, 0)
            r2 = bin(self.m2[i_c]).count("1")
            r3 = self._count(self.m3, 1 << s)
        else:
            r1 = self._count(self.m0, 0)
            r2 = bin(self.m0[i_c]).count("1")
            r3 = self._count(self.m1, 1 << s)
        rev = -math.log(r1) - math.log(r2) - math.log(r3)
        log_ratio = d_lf + (new_cjs - self.cjs) + d_err + rev - fwd
        if math.log(u[4]) < log_ratio:
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

    def _x_step_fixed(self, u):
        self.x_proposed += 1
        nb = len(self.basis)
        k = int(u[1] * nb)
        if k >= nb:
            k = nb - 1
        c0, c1, c2, c3 = self.basis[k]
        t = self.T - (((c2 - c0) >> 1).bit_length() - 1) // 2
        add = u[0] < 0.5
        if add:
            ma, mb, pc, pd = c0, c1, c2, c3
        else:
            ma, mb, pc, pd = c2, c3, c0, c1
        i_a = self._find(ma)
        i_b = self._find(mb)
        if i_a < 0 or i_b < 0 or self.counts[i_a] == 0 or self.counts[i_b] == 0:
            return
        i_c = self._get_or_add(pc)
        i_d = self._get_or_add(pd)
        xa, xb, xc, xd = self.counts[i_a], self.counts[i_b], self.counts[i_c], self.counts[i_d]
        d_lf = math.log(xa) + math.log(xb) - math.log(xc + 1) - math.log(xd + 1)
        self._apply(i_a, ma, -1)
        self._apply(i_b, mb, -1)
        self._apply(i_c, pc, 1)
        self._apply(i_d, pd, 1)
        slot = t - 2
        e_old = self.e[slot]
        e_new = e_old + 1 if add else e_old - 1
        self.e[slot] = e_new
        d_err = self._err_at(self.err_table, slot, e_new) - self.err_table[slot][e_old]
        new_cjs = self._cjs_ll(self.phi, self.p)
        log_ratio = d_lf + (new_cjs - self.cjs) + d_err
        if math.log(u[4]) < log_ratio:
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

    # -- driver ----------------------------------------------------------------
    def advance(self, n_iter, normals, theta_unifs, x_unifs,
                out_theta, out_errors, out_logjoint, out_xerrors, out_xhash):
        """Run ``n_iter`` iterations writing one row per iteration (and one
        entry per x step) into the output buffers."""
        T = self.T
        normals = normals.tolist()
        theta_unifs = theta_unifs.tolist()
        x_unifs = x_unifs.tolist()
        for row in range(n_iter):
            if self.update_theta and self.n_free:
                self._update_theta(normals, theta_unifs, row, self.iteration)
            if self.update_x:
                for step in range(self.x_steps):
                    self._compact()
                    u = x_unifs[row][step]
                    if self.algorithm == 0:
                        self._x_step_dynamic(u)
                    else:
                        self._x_step_fixed(u)
                    tot = 0
                    for v in self.e:
                        tot += v
                    out_xerrors[row, step] = tot
                    out_xhash[row, step] = self.hash
            for t in range(T - 1):
                out_theta[row, t] = self.phi[t]
                out_theta[row, T - 1 + t] = self.p[t]
            out_theta[row, 2 * T - 2] = self.alpha
            tot = 0
            for v in self.e:
                tot += v
            out_errors[row] = tot
            out_logjoint[row] = self.log_joint()
            self.iteration += 1

    # -- inspection ------------------------------------------------------------
    def support(self):
        """Live ``(codes, counts)`` in slot order."""
        codes, counts = [], []
        for c, n in zip(self.codes, self.counts):
            if n > 0:
                codes.append(c)
                counts.append(n)
        return codes, counts

    @property
    def hash_value(self):
        return self.hash

    def counters(self):
        return {
            "x_proposed": self.x_proposed,
            "x_accepted": self.x_accepted,
            "x_empty": self.x_empty,
            "theta_proposed": list(self.theta_proposed),
            "theta_accepted": list(self.theta_accepted),
            "log_step": list(self.log_step),
            "free": list(self.free),
            "errors": list(self.e),
            "iteration": self.iteration,
        }
