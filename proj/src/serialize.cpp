#include "fedinv/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fedinv/errors.hpp"

namespace fedinv {

namespace {

constexpr char kMagic[9] = "FEDINVA1";  // 8 bytes on disk
constexpr std::uint64_t kMaxCount = 1000000000ULL;

struct Writer {
  std::string out;

  void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out.append(s);
  }
  void sizes(const std::vector<std::size_t>& v) {
    u64(v.size());
    for (std::size_t x : v) u64(x);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

  void param(const ParamVector& w) {
    u64(w.layout().size());
    for (const LayoutEntry& e : w.layout()) {
      str(e.name);
      sizes(e.shape);
    }
    doubles(w.values());
  }

  void tensor(const Tensor& t) {
    sizes(t.shape());
    doubles(t.values());
  }
};

struct Reader {
  const std::string& in;
  const std::string& path;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (in.size() - pos < n)
      throw FormatError(path + ": truncated while reading " + what);
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in[pos++]);
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }

  std::uint64_t count(const char* what) {
    const std::uint64_t n = u64(what);
    if (n > kMaxCount)
      throw FormatError(path + ": implausible count " + std::to_string(n) +
                        " for " + what);
    return n;
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::string str(const char* what) {
    const std::uint64_t n = count(what);
    need(n, what);
    std::string s = in.substr(pos, n);
    pos += n;
    return s;
  }

  std::vector<std::size_t> sizes(const char* what) {
    const std::uint64_t n = count(what);
    std::vector<std::size_t> v(n);
    for (std::uint64_t i = 0; i < n; ++i)
      v[i] = static_cast<std::size_t>(u64(what));
    return v;
  }

  std::vector<double> doubles(const char* what) {
    const std::uint64_t n = count(what);
    need(8 * n, what);
    std::vector<double> v(n);
    for (std::uint64_t i = 0; i < n; ++i) v[i] = f64(what);
    return v;
  }

  ParamVector param(const char* what) {
    const std::uint64_t entries = count(what);
    std::vector<LayoutEntry> layout(entries);
    for (std::uint64_t i = 0; i < entries; ++i) {
      layout[i].name = str(what);
      layout[i].shape = sizes(what);
    }
    std::vector<double> values = doubles(what);
    if (values.size() != ParamVector::layout_numel(layout))
      throw FormatError(path + ": " + std::string(what) + " holds " +
                        std::to_string(values.size()) +
                        " values but its layout describes " +
                        std::to_string(ParamVector::layout_numel(layout)));
    return ParamVector(std::move(layout), std::move(values));
  }

  Tensor tensor(const char* what) {
    const std::vector<std::size_t> shape = sizes(what);
    const std::vector<double> values = doubles(what);
    if (values.size() != Tensor::count(shape))
      throw FormatError(path + ": " + std::string(what) +
                        " tensor payload does not match its shape");
    return Tensor(shape, values);
  }
};

void write_spec(Writer& w, const ModelSpec& spec) {
  w.u8(spec.arch == Arch::MLP ? 0 : 1);
  w.u64(spec.in_channels);
  w.u64(spec.in_h);
  w.u64(spec.in_w);
  w.u64(spec.classes);
  w.sizes(spec.hidden);
  w.sizes(spec.conv_channels);
  w.u64(spec.kernel);
  w.sizes(spec.fc_hidden);
}

ModelSpec read_spec(Reader& r) {
  ModelSpec spec;
  const std::uint8_t arch = r.u8("model arch");
  if (arch > 1)
    throw FormatError(r.path + ": unknown model arch tag " + std::to_string(arch));
  spec.arch = arch == 0 ? Arch::MLP : Arch::CNN2;
  spec.in_channels = static_cast<std::size_t>(r.u64("model input channels"));
  spec.in_h = static_cast<std::size_t>(r.u64("model input height"));
  spec.in_w = static_cast<std::size_t>(r.u64("model input width"));
  spec.classes = static_cast<std::size_t>(r.u64("model classes"));
  spec.hidden = r.sizes("model hidden widths");
  spec.conv_channels = r.sizes("model conv channels");
  spec.kernel = static_cast<std::size_t>(r.u64("model kernel"));
  spec.fc_hidden = r.sizes("model fc widths");
  try {
    validate_spec(spec);
  } catch (const std::exception& e) {
    throw FormatError(r.path + ": invalid model spec: " + e.what());
  }
  return spec;
}

void write_client_config(Writer& w, const ClientConfig& cfg) {
  w.u64(cfg.epochs);
  w.u64(cfg.batch);
  w.f64(cfg.eta);
  w.u64(cfg.seed);
  w.u8(cfg.shuffle ? 1 : 0);
}

ClientConfig read_client_config(Reader& r) {
  ClientConfig cfg;
  cfg.epochs = static_cast<std::size_t>(r.u64("client epochs"));
  cfg.batch = static_cast<std::size_t>(r.u64("client batch"));
  cfg.eta = r.f64("client eta");
  cfg.seed = r.u64("client seed");
  cfg.shuffle = r.u8("client shuffle") != 0;
  return cfg;
}

}  // namespace

void save_artifact(const std::string& path, const ClientArtifact& artifact) {
  Writer w;
  w.out.append(kMagic, 8);
  write_spec(w, artifact.spec);

  w.tensor(artifact.data.images);
  w.sizes(artifact.data.labels);
  w.str(artifact.data.provenance);

  w.param(artifact.update.w0);
  w.param(artifact.update.wT);
  w.u64(artifact.update.n);
  w.u8(artifact.update.meta.has_value() ? 1 : 0);
  if (artifact.update.meta) write_client_config(w, *artifact.update.meta);
  w.u64(artifact.update.step_gradients.size());
  for (const ParamVector& g : artifact.update.step_gradients) w.param(g);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(w.out.data(), static_cast<std::streamsize>(w.out.size()));
  out.flush();
  if (!out) throw std::runtime_error("failed while writing " + path);
}

ClientArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError(path + ": not a client artifact (bad magic)");

  Reader r{bytes, path, 8};
  ClientArtifact a;
  a.spec = read_spec(r);

  a.data.images = r.tensor("dataset images");
  a.data.labels = r.sizes("dataset labels");
  a.data.provenance = r.str("dataset provenance");
  if (a.data.images.ndim() != 4)
    throw FormatError(path + ": dataset images are not a 4-d batch");
  if (a.data.images.dim(0) != a.data.labels.size())
    throw FormatError(path + ": image count does not match label count");

  a.update.w0 = r.param("round-start weights");
  a.update.wT = r.param("round-end weights");
  a.update.n = static_cast<std::size_t>(r.u64("client data size"));
  if (r.u8("protocol flag") != 0) a.update.meta = read_client_config(r);
  const std::uint64_t steps = r.count("step gradient count");
  a.update.step_gradients.reserve(steps);
  for (std::uint64_t i = 0; i < steps; ++i)
    a.update.step_gradients.push_back(r.param("step gradient"));

  if (!a.update.w0.same_layout(a.update.wT))
    throw FormatError(path + ": start and end weights disagree on layout");
  if (a.update.w0.layout() != model_layout(a.spec))
    throw FormatError(path + ": weights do not match the model's layout");
  for (const ParamVector& g : a.update.step_gradients)
    if (!g.same_layout(a.update.w0))
      throw FormatError(path + ": a step gradient disagrees with the weight layout");

  if (r.pos != bytes.size())
    throw FormatError(path + ": trailing bytes after the artifact payload");
  return a;
}

}  // namespace fedinv
