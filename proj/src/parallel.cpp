#include "prefminer/parallel.hpp"

#include <cstdlib>

#include "prefminer/text_io.hpp"

namespace prefminer {

unsigned resolve_threads(int requested) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("PREFMINER_THREADS")) {
    auto v = parse_int64(env);
    if (v && *v > 0) return static_cast<unsigned>(*v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace prefminer
