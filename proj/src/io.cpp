#include "fadekey/io.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>
#include <unistd.h>

namespace fs = std::filesystem;

namespace fadekey::io {

namespace {

// Unique temp name beside the target so the final rename stays on one
// filesystem; the parent directory is created on demand.
fs::path temp_path_for(const fs::path& target) {
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";
  std::error_code ec;
  fs::create_directories(dir, ec); // best effort; the open below reports failure

  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream tmp_name;
  tmp_name << "." << target.filename().string() << ".tmp."
           << static_cast<unsigned long>(::getpid()) << "."
           << counter.fetch_add(1);
  return dir / tmp_name.str();
}

} // namespace

void atomic_write(const std::string& path, const std::string& bytes) {
  fs::path target(path);
  fs::path tmp = temp_path_for(target);
  std::error_code ec;

  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open for writing: " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code rm;
      fs::remove(tmp, rm);
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    std::error_code rm;
    fs::remove(tmp, rm);
    throw std::runtime_error("cannot replace " + path + ": " + ec.message());
  }
}

AtomicWriter::AtomicWriter(const std::string& path) : path_(path) {
  temp_ = temp_path_for(fs::path(path)).string();
  file_ = std::fopen(temp_.c_str(), "wb");
  if (!file_) {
    throw std::runtime_error("cannot open for writing: " + temp_);
  }
}

AtomicWriter::~AtomicWriter() {
  if (file_) { // never committed: drop the partial temp file
    std::fclose(static_cast<std::FILE*>(file_));
    std::error_code rm;
    fs::remove(temp_, rm);
  }
}

void AtomicWriter::append(const char* data, std::size_t size) {
  if (!file_) {
    throw std::logic_error("append after commit: " + path_);
  }
  if (size == 0) return;
  if (std::fwrite(data, 1, size, static_cast<std::FILE*>(file_)) != size) {
    throw std::runtime_error("write failed: " + temp_);
  }
}

void AtomicWriter::commit() {
  if (!file_) return;
  std::FILE* f = static_cast<std::FILE*>(file_);
  file_ = nullptr;
  const bool flushed = std::fflush(f) == 0;
  const bool closed = std::fclose(f) == 0;
  if (!flushed || !closed) {
    std::error_code rm;
    fs::remove(temp_, rm);
    throw std::runtime_error("write failed: " + temp_);
  }
  std::error_code ec;
  fs::rename(temp_, path_, ec);
  if (ec) {
    std::error_code rm;
    fs::remove(temp_, rm);
    throw std::runtime_error("cannot replace " + path_ + ": " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open for reading: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw std::runtime_error("read failed: " + path);
  }
  return buf.str();
}

namespace {
std::string format(const char* fmt, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, value);
  return buf;
}
} // namespace

std::string g9(double value) { return format("%.9g", value); }

std::string g17(double value) { return format("%.17g", value); }

std::string u64_str(std::uint64_t value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(value));
  return buf;
}

std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  return out.str();
}

} // namespace fadekey::io
