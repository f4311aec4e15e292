import numpy as np
class SimulatedAnnealing:
    def __init__(self, budget, dim, seed=None, t0=2.0, t1=0.01):
        self.budget = budget
        self.dim = dim
        self.t0 = t0
        self.t1 = t1
        self.rng = np.random.default_rng(seed)

    def __call__(self, func):
        x = self.rng.integers(0, 2, self.dim)
        fx = func(x)
        best, fbest = x.copy(), fx
        while func.state.evaluations < self.budget and fbest < func.optimum.y:
            frac = func.state.evaluations / self.budget
            temp = self.t0 * (self.t1 / self.t0) ** frac
            y = x.copy()
            i = self.rng.integers(self.dim)
            y[i] = 1 - y[i]
            fy = func(y)
            if fy >= fx or self.rng.random() < np.exp((fy - fx) / temp):
                x, fx = y, fy
                if fx > fbest:
                    best, fbest = x.copy(), fx
        return fbest, best
