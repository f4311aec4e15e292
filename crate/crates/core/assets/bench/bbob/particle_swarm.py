import numpy as np
class ParticleSwarm:
    def __init__(self, budget, dim, seed=None, swarm_size=30, w=0.7298, c1=1.49618, c2=1.49618):
        self.budget = budget
        self.dim = dim
        self.swarm_size = swarm_size
        self.w = w
        self.c1 = c1
        self.c2 = c2
        self.rng = np.random.default_rng(seed)

    def __call__(self, func):
        n, m = self.dim, self.swarm_size
        lb, ub = np.asarray(func.bounds.lb, float), np.asarray(func.bounds.ub, float)
        x = self.rng.uniform(lb, ub, (m, n))
        v = self.rng.uniform(-(ub - lb), ub - lb, (m, n)) * 0.1
        pbest = x.copy()
        pfit = np.full(m, np.inf)
        f_opt, x_opt = np.inf, None
        while func.state.evaluations < self.budget:
            for i in range(m):
                if func.state.evaluations >= self.budget:
                    break
                f = func(x[i])
                if f < pfit[i]:
                    pfit[i], pbest[i] = f, x[i].copy()
                if f < f_opt:
                    f_opt, x_opt = f, x[i].copy()
            if f_opt <= func.optimum.y:
                break
            g = pbest[np.argmin(pfit)]
            r1, r2 = self.rng.random((m, n)), self.rng.random((m, n))
            v = self.w * v + self.c1 * r1 * (pbest - x) + self.c2 * r2 * (g - x)
            x = np.clip(x + v, lb, ub)
        return f_opt, x_opt
