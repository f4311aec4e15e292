import numpy as np
class FastGA:
    def __init__(self, budget, dim, seed=None, beta=1.5):
        self.budget = budget
        self.dim = dim
        self.rng = np.random.default_rng(seed)
        ks = np.arange(1, max(2, dim // 2 + 1))
        w = ks ** (-beta)
        self.ks = ks
        self.probs = w / w.sum()

    def __call__(self, func):
        x = self.rng.integers(0, 2, self.dim)
        fx = func(x)
        while func.state.evaluations < self.budget and fx < func.optimum.y:
            k = self.rng.choice(self.ks, p=self.probs)
            mask = self.rng.random(self.dim) < k / self.dim
            if not mask.any():
                mask[self.rng.integers(self.dim)] = True
            y = np.where(mask, 1 - x, x)
            fy = func(y)
            if fy >= fx:
                x, fx = y, fy
        return fx, x
