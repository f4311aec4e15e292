import numpy as np
class CMAES:
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
        cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        cs = (mueff + 2) / (n + mueff + 5)
        c1 = 2 / ((n + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        damps = 1 + 2 * max(0, np.sqrt((mueff - 1) / (n + 1)) - 1) + cs
        chin = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))
        mean = self.rng.uniform(lb, ub)
        sigma = self.sigma0
        pc, ps = np.zeros(n), np.zeros(n)
        B, D, C = np.eye(n), np.ones(n), np.eye(n)
        f_opt, x_opt = np.inf, None
        gen = 0
        while func.state.evaluations + lam <= self.budget:
            z = self.rng.standard_normal((lam, n))
            y = z @ (B * D).T
            xs = np.clip(mean + sigma * y, lb, ub)
            fs = np.array([func(x) for x in xs])
            order = np.argsort(fs)
            if fs[order[0]] < f_opt:
                f_opt, x_opt = fs[order[0]], xs[order[0]].copy()
            if f_opt <= func.optimum.y:
                break
            old = mean
            ysel = (xs[order[:mu]] - old) / sigma
            yw = w @ ysel
            mean = old + sigma * yw
            invsqrt = B @ np.diag(1 / D) @ B.T
            ps = (1 - cs) * ps + np.sqrt(cs * (2 - cs) * mueff) * (invsqrt @ yw)
            gen += 1
            hsig = np.linalg.norm(ps) / np.sqrt(1 - (1 - cs) ** (2 * gen)) / chin < 1.4 + 2 / (n + 1)
            pc = (1 - cc) * pc + hsig * np.sqrt(cc * (2 - cc) * mueff) * yw
            C = ((1 - c1 - cmu) * C + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * C)
                 + cmu * (ysel.T * w) @ ysel)
            sigma *= np.exp((cs / damps) * (np.linalg.norm(ps) / chin - 1))
            sigma = min(sigma, 10.0)
            C = np.triu(C) + np.triu(C, 1).T
            evals, B = np.linalg.eigh(C)
            D = np.sqrt(np.maximum(evals, 1e-20))
        return f_opt, x_opt
