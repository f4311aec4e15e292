import numpy as np
class DifferentialEvolution:
    def __init__(self, budget, dim, seed=None, pop_size=None, F=0.5, CR=0.9):
        self.budget = budget
        self.dim = dim
        self.pop_size = pop_size or max(10, 5 * dim)
        self.F = F
        self.CR = CR
        self.rng = np.random.default_rng(seed)

    def __call__(self, func):
        n, np_ = self.dim, self.pop_size
        lb, ub = np.asarray(func.bounds.lb, float), np.asarray(func.bounds.ub, float)
        pop = self.rng.uniform(lb, ub, (np_, n))
        fit = np.full(np_, np.inf)
        for i in range(np_):
            if func.state.evaluations >= self.budget:
                break
            fit[i] = func(pop[i])
        while func.state.evaluations < self.budget and fit.min() > func.optimum.y:
            for i in range(np_):
                if func.state.evaluations >= self.budget:
                    break
                a, b, c = self.rng.choice([j for j in range(np_) if j != i], 3, replace=False)
                mutant = np.clip(pop[a] + self.F * (pop[b] - pop[c]), lb, ub)
                cross = self.rng.random(n) < self.CR
                cross[self.rng.integers(n)] = True
                trial = np.where(cross, mutant, pop[i])
                ft = func(trial)
                if ft <= fit[i]:
                    pop[i], fit[i] = trial, ft
        i = np.argmin(fit)
        return fit[i], pop[i]
