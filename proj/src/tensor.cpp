#include "dm/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace dm {

const char* status_name(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::InvalidArgument: return "invalid_argument";
    case Status::Validation: return "validation";
    case Status::Diverged: return "diverged";
    case Status::Io: return "io";
    case Status::Budget: return "budget";
    case Status::Numeric: return "numeric";
    case Status::Internal: return "internal";
  }
  return "unknown";
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  DM_REQUIRE(all_finite(), Numeric, what << " contains a non-finite value");
}

double Tensor::l2_norm_row(int64_t r) const {
  double s = 0.0;
  for (int64_t c = 0; c < cols_; ++c) {
    double v = at(r, c);
    s += v * v;
  }
  return std::sqrt(s);
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

int64_t ParamStore::add(const std::string& name, Tensor value) {
  DM_REQUIRE(!name.empty(), InvalidArgument, "parameter name must be non-empty");
  DM_REQUIRE(!has(name), InvalidArgument, "duplicate parameter name '" << name << "'");
  entries_.push_back({name, std::move(value)});
  return static_cast<int64_t>(entries_.size()) - 1;
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

int64_t ParamStore::index_of(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int64_t>(i);
  }
  fail(Status::InvalidArgument, "unknown parameter '" + name + "'");
}

namespace {

constexpr char kMagic[4] = {'D', 'M', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  size_t offset() const { return off_; }
  bool at_end() const { return off_ == n_; }
  size_t remaining() const { return n_ - off_; }

  void read(void* dst, size_t n, const char* what) {
    DM_REQUIRE(off_ + n <= n_, Io,
               "checkpoint truncated while reading " << what << " at byte " << off_);
    std::memcpy(dst, p_ + off_, n);
    off_ += n;
  }

  uint8_t u8(const char* what) {
    uint8_t v;
    read(&v, 1, what);
    return v;
  }
  uint16_t u16(const char* what) {
    uint8_t b[2];
    read(b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32(const char* what) {
    uint8_t b[4];
    read(b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  double f64(const char* what) {
    uint8_t b[8];
    read(b, 8, what);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

 private:
  const uint8_t* p_;
  size_t n_;
  size_t off_ = 0;
};

}  // namespace

std::vector<uint8_t> serialize_params(const ParamStore& params) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  for (int64_t i = 0; i < params.count(); ++i) {
    const std::string& name = params.name(i);
    const Tensor& t = params.value(i);
    t.require_finite("parameter '" + name + "'");
    DM_REQUIRE(name.size() <= 0xffff, InvalidArgument,
               "parameter name too long: " << name.size() << " bytes");
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(2);  // rank
    put_u32(out, static_cast<uint32_t>(t.rows()));
    put_u32(out, static_cast<uint32_t>(t.cols()));
    for (int64_t k = 0; k < t.size(); ++k) put_f64(out, t[k]);
  }
  return out;
}

ParamStore deserialize_params(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.read(magic, 4, "magic");
  DM_REQUIRE(std::memcmp(magic, kMagic, 4) == 0, Io, "bad checkpoint magic");
  uint32_t version = r.u32("version");
  DM_REQUIRE(version == kVersion, Io, "unsupported checkpoint version " << version);
  ParamStore params;
  while (!r.at_end()) {
    uint16_t name_len = r.u16("name length");
    std::string name(name_len, '\0');
    r.read(name.data(), name_len, "name");
    uint8_t rank = r.u8("rank");
    DM_REQUIRE(rank == 1 || rank == 2, Io,
               "parameter '" << name << "': unsupported rank " << int(rank));
    int64_t rows = 1, cols = 1;
    if (rank == 1) {
      cols = r.u32("dim");
    } else {
      rows = r.u32("dim 0");
      cols = r.u32("dim 1");
    }
    int64_t n = rows * cols;
    DM_REQUIRE(static_cast<size_t>(n) * 8 <= r.remaining(), Io,
               "checkpoint truncated in values of '" << name << "' at byte " << r.offset());
    Tensor t(rows, cols);
    for (int64_t k = 0; k < n; ++k) t[k] = r.f64("value");
    t.require_finite("parameter '" + name + "'");
    params.add(name, std::move(t));
  }
  return params;
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::vector<uint8_t> bytes = serialize_params(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  DM_REQUIRE(f.good(), Io, "cannot open '" << path << "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  DM_REQUIRE(f.good(), Io, "write failed for '" << path << "'");
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  DM_REQUIRE(f.good(), Io, "cannot open '" << path << "' for reading");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace dm
