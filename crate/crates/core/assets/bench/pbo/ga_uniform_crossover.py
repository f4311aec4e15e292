import numpy as np
class GeneticAlgorithm:
    def __init__(self, budget, dim, seed=None, pop_size=20):
        self.budget = budget
        self.dim = dim
        self.pop_size = pop_size
        self.rng = np.random.default_rng(seed)

    def __call__(self, func):
        n = self.pop_size
        pop = self.rng.integers(0, 2, (n, self.dim))
        fit = np.array([func(ind) for ind in pop], dtype=float)
        while func.state.evaluations < self.budget and fit.max() < func.optimum.y:
            a, b = self.rng.integers(n, size=2)
            c, d = self.rng.integers(n, size=2)
            p1 = pop[a] if fit[a] >= fit[b] else pop[b]
            p2 = pop[c] if fit[c] >= fit[d] else pop[d]
            child = np.where(self.rng.random(self.dim) < 0.5, p1, p2)
            flip = self.rng.random(self.dim) < 1.0 / self.dim
            child = np.where(flip, 1 - child, child)
            fc = func(child)
            worst = np.argmin(fit)
            if fc >= fit[worst]:
                pop[worst], fit[worst] = child, fc
        i = np.argmax(fit)
        return fit[i], pop[i]
