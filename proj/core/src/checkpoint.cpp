#include "embnmt/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "embnmt/corpus.hpp"
#include "embnmt/errors.hpp"

namespace embnmt {

namespace {

constexpr const char* kMagic = "EMBNMT-CHECKPOINT";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

struct Header {
  std::map<std::string, std::string> meta;
  std::vector<ManifestEntry> tensors;
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
  std::size_t payload_offset = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  Header h;
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw IntegrityError("empty checkpoint " + path.string());
  const Sentence magic = split_tokens(line);
  if (magic.size() != 2 || magic[0] != kMagic) throw IntegrityError("not a checkpoint: " + path.string());
  if (magic[1] != std::to_string(kCheckpointVersion)) {
    throw IntegrityError("unsupported checkpoint version " + magic[1]);
  }
  auto read_words = [&](std::size_t n, std::vector<std::string>& words) {
    for (std::size_t i = 0; i < n; ++i) {
      ++lineno;
      if (!std::getline(in, line) || line.empty()) throw FormatError("truncated vocabulary section", lineno);
      words.push_back(line);
    }
  };
  auto to_size = [&](const std::string& s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad integer '" + s + "'", lineno);
    return v;
  };
  for (;;) {
    ++lineno;
    if (!std::getline(in, line)) throw FormatError("checkpoint header not terminated", lineno);
    if (line == "end") break;
    const Sentence f = split_tokens(line);
    if (f.empty()) continue;
    if (f[0] == "tensor") {
      if (f.size() != 5) throw FormatError("malformed tensor entry", lineno);
      h.tensors.push_back({f[1], to_size(f[2]), to_size(f[3]), to_size(f[4])});
    } else if (f[0] == "source_vocab" && f.size() == 2) {
      read_words(to_size(f[1]), h.source_words);
    } else if (f[0] == "target_vocab" && f.size() == 2) {
      read_words(to_size(f[1]), h.target_words);
    } else if (f.size() == 2) {
      h.meta[f[0]] = f[1];
    } else {
      throw FormatError("malformed header line", lineno);
    }
  }
  h.payload_offset = static_cast<std::size_t>(in.tellg());
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ModelParams& p = ckpt.params;
  const ModelConfig& mc = p.config();
  if (mc.source_vocab != ckpt.source_vocab.size() || mc.target_vocab != ckpt.target_vocab.size()) {
    throw IntegrityError("model dimensions do not match the vocabularies being saved");
  }
  std::ostringstream head;
  head << kMagic << ' ' << kCheckpointVersion << '\n';
  const std::vector<std::pair<std::string, std::string>> meta = {
      {"source_vocab_size", std::to_string(mc.source_vocab)},
      {"target_vocab_size", std::to_string(mc.target_vocab)},
      {"embed_dim", std::to_string(mc.embed_dim)},
      {"hidden_dim", std::to_string(mc.hidden_dim)},
      {"layers", std::to_string(mc.layers)},
      {"strategy", to_string(ckpt.strategy)},
      {"phase", to_string(ckpt.meta.phase)},
      {"epoch", std::to_string(ckpt.meta.epoch)},
      {"valid_loss", fmt(ckpt.meta.valid_loss)},
      {"lr", fmt(ckpt.meta.lr)},
      {"learning_rate", fmt(ckpt.config.learning_rate)},
      {"beta1", fmt(ckpt.config.beta1)},
      {"beta2", fmt(ckpt.config.beta2)},
      {"epsilon", fmt(ckpt.config.epsilon)},
      {"grad_clip", fmt(ckpt.config.grad_clip)},
      {"weight_decay", fmt(ckpt.config.weight_decay)},
      {"dropout", fmt(ckpt.config.dropout)},
      {"lr_decay_factor", fmt(ckpt.config.lr_decay_factor)},
      {"lambda", fmt(ckpt.config.lambda)},
      {"batch_size", std::to_string(ckpt.config.batch_size)},
      {"max_epochs", std::to_string(ckpt.config.max_epochs)},
      {"seed", std::to_string(ckpt.config.seed)},
      {"adam_step", std::to_string(ckpt.adam.step)},
  };
  for (const auto& [k, v] : meta) head << k << ' ' << v << '\n';

  std::string payload;
  std::size_t offset = 0;
  auto add_tensor = [&](const std::string& name, const ad::Tensor& t) {
    head << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << ' ' << offset << '\n';
    for (double v : t.data()) put_le(payload, v);
    offset += t.size();
  };
  for (ad::ParamId id = 0; id < p.count(); ++id) add_tensor(p.name(id), p.tensor(id));
  const bool with_adam = ckpt.adam.m.size() == p.count();
  if (with_adam) {
    for (ad::ParamId id = 0; id < p.count(); ++id) add_tensor("adam.m." + p.name(id), ckpt.adam.m[id]);
    for (ad::ParamId id = 0; id < p.count(); ++id) add_tensor("adam.v." + p.name(id), ckpt.adam.v[id]);
  }
  for (const auto& [label, vocab] : {std::pair{"source_vocab", &ckpt.source_vocab},
                                     std::pair{"target_vocab", &ckpt.target_vocab}}) {
    const auto words = vocab->corpus_words();
    head << label << ' ' << words.size() << '\n';
    for (const auto& w : words) head << w << '\n';
  }
  head << "end\n";

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  return read_header(in, path).tensors;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  Header h = read_header(in, path);
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t expected = 0;
  for (const auto& e : h.tensors) {
    if (e.offset != expected) throw IntegrityError("tensor '" + e.name + "' has a non-contiguous offset");
    expected += e.rows * e.cols;
  }
  if (payload.size() != expected * 8) {
    throw IntegrityError("checkpoint payload holds " + std::to_string(payload.size()) + " bytes, manifest needs " +
                         std::to_string(expected * 8));
  }
  auto meta = [&](const std::string& key) -> const std::string& {
    auto it = h.meta.find(key);
    if (it == h.meta.end()) throw IntegrityError("checkpoint is missing '" + key + "'");
    return it->second;
  };
  auto as_size = [&](const std::string& key) {
    std::size_t v = 0;
    const std::string& s = meta(key);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw IntegrityError("bad value for '" + key + "'");
    return v;
  };
  auto as_double = [&](const std::string& key) {
    double v = 0;
    const std::string& s = meta(key);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw IntegrityError("bad value for '" + key + "'");
    return v;
  };

  Checkpoint ckpt{ModelParams(ModelConfig{1, 1, 1, 1, 1}, 0), Vocabulary(std::move(h.source_words)),
                  Vocabulary(std::move(h.target_words)), {}, {}, {}, {}};
  ModelConfig mc;
  mc.source_vocab = as_size("source_vocab_size");
  mc.target_vocab = as_size("target_vocab_size");
  mc.embed_dim = as_size("embed_dim");
  mc.hidden_dim = as_size("hidden_dim");
  mc.layers = as_size("layers");
  if (mc.source_vocab != ckpt.source_vocab.size() || mc.target_vocab != ckpt.target_vocab.size()) {
    throw IntegrityError("vocabulary sizes (" + std::to_string(ckpt.source_vocab.size()) + ", " +
                         std::to_string(ckpt.target_vocab.size()) + ") do not match model (" +
                         std::to_string(mc.source_vocab) + ", " + std::to_string(mc.target_vocab) + ")");
  }

  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  std::map<std::string, ad::Tensor> by_name;
  std::vector<std::pair<std::string, ad::Tensor>> params;
  for (const auto& e : h.tensors) {
    std::vector<double> data(e.rows * e.cols);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_le(bytes + (e.offset + i) * 8);
    ad::Tensor t(e.rows, e.cols, std::move(data));
    if (e.name.rfind("adam.", 0) == 0) {
      by_name.emplace(e.name, std::move(t));
    } else {
      params.emplace_back(e.name, std::move(t));
    }
  }
  ckpt.params = ModelParams::from_tensors(mc, std::move(params));

  ckpt.strategy = parse_strategy(meta("strategy"));
  try {
    ckpt.meta.phase = parse_loss_phase(meta("phase"));
  } catch (const StructuralError& e) {
    throw IntegrityError(e.what());
  }
  ckpt.meta.epoch = as_size("epoch");
  ckpt.meta.valid_loss = as_double("valid_loss");
  ckpt.meta.lr = as_double("lr");
  ckpt.meta.parameter_file = path.string();

  TrainConfig& c = ckpt.config;
  c.learning_rate = as_double("learning_rate");
  c.beta1 = as_double("beta1");
  c.beta2 = as_double("beta2");
  c.epsilon = as_double("epsilon");
  c.grad_clip = as_double("grad_clip");
  c.weight_decay = as_double("weight_decay");
  c.dropout = as_double("dropout");
  c.lr_decay_factor = as_double("lr_decay_factor");
  c.lambda = as_double("lambda");
  c.batch_size = as_size("batch_size");
  c.max_epochs = as_size("max_epochs");
  c.seed = as_size("seed");
  c.embed_dim = mc.embed_dim;
  c.hidden_dim = mc.hidden_dim;
  c.layers = mc.layers;

  ckpt.adam.step = as_size("adam_step");
  if (!by_name.empty()) {
    for (ad::ParamId id = 0; id < ckpt.params.count(); ++id) {
      auto m = by_name.find("adam.m." + ckpt.params.name(id));
      auto v = by_name.find("adam.v." + ckpt.params.name(id));
      if (m == by_name.end() || v == by_name.end() || m->second.shape() != ckpt.params.tensor(id).shape() ||
          v->second.shape() != ckpt.params.tensor(id).shape()) {
        throw IntegrityError("optimizer state for '" + ckpt.params.name(id) + "' is missing or misshaped");
      }
      ckpt.adam.m.push_back(std::move(m->second));
      ckpt.adam.v.push_back(std::move(v->second));
    }
  }
  return ckpt;
}

}  // namespace embnmt
