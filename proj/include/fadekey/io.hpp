#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Small file-output toolkit shared by the modules and the CLI: atomic file
// replacement (temp file + rename, so partially written outputs never land
// under the final name) and fixed-width numeric formatting for CSVs.

namespace fadekey::io {

// Write bytes to `path` atomically: the data goes to a temp file in the same
// directory which is then renamed over the target.
void atomic_write(const std::string& path, const std::string& bytes);

// Streaming variant of atomic_write for content too large to assemble in
// memory (per-pulse event tapes).  Chunks accumulate in the same hidden temp
// file; nothing appears under the final name until commit(), and destroying
// an uncommitted writer removes the temp file.
class AtomicWriter {
 public:
  explicit AtomicWriter(const std::string& path);
  ~AtomicWriter();
  AtomicWriter(const AtomicWriter&) = delete;
  AtomicWriter& operator=(const AtomicWriter&) = delete;

  void append(const char* data, std::size_t size);
  void append(const std::string& chunk) { append(chunk.data(), chunk.size()); }
  void commit(); // idempotent; append afterwards is an error

 private:
  std::string path_;
  std::string temp_;
  void* file_ = nullptr; // std::FILE, kept opaque here
};

std::string read_file(const std::string& path);

// Numeric CSV cell: %.9g (9 significant digits, stable across platforms for
// the value range we emit).
std::string g9(double value);

// Full-precision round-trippable double for headers/manifests.
std::string g17(double value);

std::string u64_str(std::uint64_t value);

// Render `rows` under a comma-joined header line.
std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

} // namespace fadekey::io
