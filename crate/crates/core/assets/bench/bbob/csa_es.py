import numpy as np
class CSAES:
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
        damps = 1 + cs + 2 * max(0, np.sqrt((mueff - 1) / (n + 1)) - 1)
        chin = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))
        mean = self.rng.uniform(lb, ub)
        sigma = self.sigma0
        ps = np.zeros(n)
        f_opt, x_opt = np.inf, None
        while func.state.evaluations + lam <= self.budget:
            z = self.rng.standard_normal((lam, n))
            xs = np.clip(mean + sigma * z, lb, ub)
            fs = np.array([func(x) for x in xs])
            order = np.argsort(fs)
            if fs[order[0]] < f_opt:
                f_opt, x_opt = fs[order[0]], xs[order[0]].copy()
            if f_opt <= func.optimum.y:
                break
            zw = w @ z[order[:mu]]
            mean = mean + sigma * zw
            ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mueff) * zw
            sigma *= np.exp((cs / damps) * (np.linalg.norm(ps) / chin - 1))
            sigma = min(sigma, 10.0)
        return f_opt, x_opt
