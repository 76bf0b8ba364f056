#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <cstdint>

namespace lfm::verify {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

using Suite = std::vector<Check>;

bool all_pass(const Suite& s);
void print_suite(const Suite& s, std::ostream& os);

// fine-grained checks (64-bit scalars); the acceptance harness drives these
// with its own instance counts and tolerances
Check zoh_goldens(double tol);
Check zoh_series_fallback(double tol);
Check scan_equivalence(int instances, const std::vector<int>& lengths, double tol, uint64_t seed);
Check selective_schedule_equivalence(double tol, uint64_t seed);
Check scan_associativity(int triples, double tol, uint64_t seed);
Check scan_stability(int length, uint64_t seed);
Check geometry_roundtrips(const std::vector<int>& extents, uint64_t seed);
Check geometry_index_oracles(uint64_t seed);
Check color_roundtrip(double tol, uint64_t seed);
Check bicubic_properties(uint64_t seed);
Check augment_group_properties(uint64_t seed);
Check ensemble_identity(uint64_t seed);
Check flatten_enumeration();
Check ess2d_identity(uint64_t seed);
Check ess2d_group_independence(uint64_t seed);
Check scan_param_ratio();
Suite gradient_checks(uint64_t seed, double tol = 1e-4);

Suite ssm_suite(uint64_t seed = 7);
Suite geometry_suite(uint64_t seed = 7);
Suite blocks_suite(uint64_t seed = 7);
Suite grads_suite(uint64_t seed = 7);
Suite run_suite(const std::string& name, uint64_t seed = 7);

}  // namespace lfm::verify
