import numpy as np
class OnePlusOneEA:
    def __init__(self, budget, dim, seed=None):
        self.budget = budget
        self.dim = dim
        self.rng = np.random.default_rng(seed)

    def __call__(self, func):
        p = 1.0 / self.dim
        x = self.rng.integers(0, 2, self.dim)
        fx = func(x)
        while func.state.evaluations < self.budget and fx < func.optimum.y:
            mask = self.rng.random(self.dim) < p
            if not mask.any():
                mask[self.rng.integers(self.dim)] = True
            y = np.where(mask, 1 - x, x)
            fy = func(y)
            if fy >= fx:
                x, fx = y, fy
        return fx, x
