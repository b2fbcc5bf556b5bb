#pragma once

#include <cstdint>
#include <iosfwd>

namespace minikv {

// Runs every module's invariant list on seeded inputs, printing one line per
// check. Returns true when all checks pass.
bool run_verify(std::uint64_t seed, std::ostream& out);

}  // namespace minikv
