import numpy as np
class CholeskyCMAES:
    def __init__(self, budget, dim, seed=None, sigma0=2.0):
        self.budget = budget
        self.dim = dim
        self.sigma0 = sigma0
        self.rng = np.random.default_rng(seed)

    def __call__(self, func):
        n = self.dim
        lb, ub = np.asarray(func.bounds.lb, float), np.asarray(func.bounds.ub, float)
        lam = 4 + int(3 * np.log(n))
        mu = lam // 2
        w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        w /= w.sum()
        mueff = 1.0 / np.sum(w ** 2)
        cs = (mueff + 2) / (n + mueff + 5)
        cc = 4 / (n + 4)
        c1 = 2 / ((n + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        damps = 1 + cs
        chin = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))
        mean = self.rng.uniform(lb, ub)
        sigma = self.sigma0
        A = np.eye(n)
        ps, pc = np.zeros(n), np.zeros(n)
        f_opt, x_opt = np.inf, None
        while func.state.evaluations + lam <= self.budget:
            z = self.rng.standard_normal((lam, n))
            y = z @ A.T
            xs = np.clip(mean + sigma * y, lb, ub)
            fs = np.array([func(x) for x in xs])
            order = np.argsort(fs)
            if fs[order[0]] < f_opt:
                f_opt, x_opt = fs[order[0]], xs[order[0]].copy()
            if f_opt <= func.optimum.y:
                break
            zsel = z[order[:mu]]
            ysel = y[order[:mu]]
            zw = w @ zsel
            yw = w @ ysel
            mean = mean + sigma * yw
            ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mueff) * zw
            pc = (1 - cc) * pc + np.sqrt(cc * (2 - cc) * mueff) * yw
            C = (1 - c1 - cmu) * (A @ A.T) + c1 * np.outer(pc, pc) + cmu * (ysel.T * w) @ ysel
            try:
                A = np.linalg.cholesky(C + 1e-14 * np.eye(n))
            except np.linalg.LinAlgError:
                A = np.eye(n)
            sigma *= np.exp((cs / damps) * (np.linalg.norm(ps) / chin - 1))
            sigma = min(sigma, 10.0)
        return f_opt, x_opt
