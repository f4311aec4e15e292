import ast, json, sys

SKIP = (ast.expr_context,)


def children(node):
    return [c for c in ast.iter_child_nodes(node) if not isinstance(c, SKIP)]


def sexp(node, memo):
    key = id(node)
    if key not in memo:
        kids = children(node)
        name = type(node).__name__
        memo[key] = "(" + name + "".join(" " + sexp(k, memo) for k in kids) + ")" if kids else "(" + name + ")"
    return memo[key]


def subtrees(tree):
    memo = {}
    out = []
    for node in ast.walk(tree):
        if children(node):
            out.append(sexp(node, memo))
    return out


def names_in(node):
    if node is None:
        return []
    found = []
    for n in ast.walk(node):
        if isinstance(n, ast.Name):
            found.append((n.lineno, n.col_offset, n.id))
    return [name for _, _, name in sorted(found)]


def targets_of(node):
    if isinstance(node, ast.Name):
        return [node.id]
    if isinstance(node, (ast.Tuple, ast.List)):
        return [t for e in node.elts for t in targets_of(e)]
    if isinstance(node, ast.Starred):
        return targets_of(node.value)
    return []


class Flow(ast.NodeVisitor):
    def __init__(self):
        self.items = []
        self.defined = set()

    def define(self, targets, sources):
        for t in targets:
            self.items.append((t, "computedFrom", sources))
            self.defined.add(t)

    def visit_Name(self, node):
        if isinstance(node.ctx, ast.Load) and node.id in self.defined:
            self.items.append((node.id, "comesFrom", [node.id]))

    def visit_Assign(self, node):
        self.visit(node.value)
        src = names_in(node.value)
        for tgt in node.targets:
            if not targets_of(tgt):
                self.visit(tgt)
            self.define(targets_of(tgt), src)

    def visit_AugAssign(self, node):
        self.visit(node.value)
        tg = targets_of(node.target)
        self.define(tg, tg + names_in(node.value))

    def visit_AnnAssign(self, node):
        if node.value is not None:
            self.visit(node.value)
        self.define(targets_of(node.target), names_in(node.value))

    def visit_For(self, node):
        self.visit(node.iter)
        self.define(targets_of(node.target), names_in(node.iter))
        for s in node.body + node.orelse:
            self.visit(s)

    def visit_comprehension(self, node):
        self.visit(node.iter)
        self.define(targets_of(node.target), names_in(node.iter))
        for c in node.ifs:
            self.visit(c)

    def visit_ListComp(self, node):
        for g in node.generators:
            self.visit(g)
        self.visit(node.elt)

    visit_SetComp = visit_ListComp
    visit_GeneratorExp = visit_ListComp

    def visit_DictComp(self, node):
        for g in node.generators:
            self.visit(g)
        self.visit(node.key)
        self.visit(node.value)

    def visit_arguments(self, node):
        for a in node.posonlyargs + node.args + node.kwonlyargs:
            self.defined.add(a.arg)
        for a in (node.vararg, node.kwarg):
            if a is not None:
                self.defined.add(a.arg)
        for d in node.defaults + [d for d in node.kw_defaults if d is not None]:
            self.visit(d)

    def visit_withitem(self, node):
        self.visit(node.context_expr)
        if node.optional_vars is not None:
            self.define(targets_of(node.optional_vars), names_in(node.context_expr))


def dataflow(tree):
    flow = Flow()
    flow.visit(tree)
    rename = {}

    def norm(v):
        if v not in rename:
            rename[v] = "var_%d" % len(rename)
        return rename[v]

    out = []
    for var, rel, srcs in flow.items:
        v = norm(var)
        s = [norm(x) for x in srcs]
        out.append(v + "|" + rel + "|" + ",".join(s))
    return out


def main():
    sources = json.load(sys.stdin)
    results = []
    for src in sources:
        try:
            tree = ast.parse(src)
        except (SyntaxError, ValueError) as e:
            results.append({"error": str(e)})
            continue
        results.append({"subtrees": subtrees(tree), "dataflow": dataflow(tree)})
    json.dump(results, sys.stdout)


main()
