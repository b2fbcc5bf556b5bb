#pragma once

#include <iosfwd>
#include <string>

#include "minikv/cache_engine.hpp"

namespace minikv {

// Binary cache snapshot, little-endian:
//   magic "MKVC", version u32,
//   d, n_r, group_size, mode, tokens_quantized (u64 each),
//   per quantized tensor (key then value): axis u32, logical_rows u64,
//     block count u64 + block row counts, word count u64 + packed words,
//     param count u64 + (scale f32, zero f32) pairs,
//   identity-mode stores (rows u64 + f32 data, key then value),
//   residual buffers (rows u64 + f32 data, key then value).
void save_cache(const KVCacheLayer& cache, std::ostream& out);
void save_cache(const KVCacheLayer& cache, const std::string& path);

KVCacheLayer load_cache(std::istream& in);
KVCacheLayer load_cache(const std::string& path);

}  // namespace minikv
