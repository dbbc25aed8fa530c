"""Build a chromosome by hand, check its dimensions and fit it with tensor linear regression."""

from tensorgep import Host, build_report, evaluate_individual, gen_maxwell, parse_host, serialize_host
from tensorgep.benchmarks import maxwell_library
from tensorgep.genome import TENSOR, gene_from_orf

ds = gen_maxwell(100, seed=1)
lib = maxwell_library(ds)

# electric terms only: eps0·E_iE_j and (eps0·E_kE_k)·delta_ij
genes = (
    gene_from_orf(["p", "E_iE_j"], lib, TENSOR, 5, [["epsilon0"]]),
    gene_from_orf(["p", "delta_ij"], lib, TENSOR, 5, [["*", "epsilon0", "E_kE_k"]]),
)
host = Host(genes)
text = serialize_host(host)
print("chromosome:", text)
assert serialize_host(parse_host(text, lib, 5, 10)) == text

fit = evaluate_individual(host, ds)
print("dimension check passed:", fit.dim_passed)
print("weights:", fit.weights())
print("loss:", fit.loss, "(nonzero: the magnetic terms are missing)")
print(build_report(host, fit, ds).pruned_equation)
