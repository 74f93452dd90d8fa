#pragma once

// Text checkpoint, version 1:
//
//   emgmoe-checkpoint 1
//   meta <key> <value>        (zero or more, sorted by key)
//   seed <u64>
//   input <channels> <length>
//   layers <count>
//   <one layer description per line>
//   params <count>
//   <one shortest-round-trip decimal per line>

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "emgmoe/error.hpp"
#include "emgmoe/format.hpp"
#include "emgmoe/nn/model.hpp"

namespace emgmoe::nn {

inline constexpr const char* kCheckpointMagic = "emgmoe-checkpoint";
inline constexpr int kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  Model model;
  Metadata meta;
};

inline std::string serialize_checkpoint(const Model& m, const Metadata& meta = {}) {
  std::string out = std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      fail(ErrorKind::InvalidInput, "metadata keys must be single tokens and values single lines");
    }
    out += "meta " + k + " " + v + "\n";
  }
  out += "seed " + std::to_string(m.seed()) + "\n";
  out += "input " + std::to_string(m.input_shape().channels) + " " + std::to_string(m.input_shape().length) + "\n";
  out += "layers " + std::to_string(m.layers().size()) + "\n";
  for (const auto& l : m.layers()) out += to_string(l) + "\n";
  out += "params " + std::to_string(m.num_params()) + "\n";
  for (double p : m.params()) {
    out += format_double(p);
    out += '\n';
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) fail(ErrorKind::Format, "checkpoint truncated after line " + std::to_string(lineno));
    ++lineno;
    return line;
  };
  auto bad = [&](const std::string& why) -> void {
    fail(ErrorKind::Format, "checkpoint line " + std::to_string(lineno) + ": " + why);
  };

  {
    std::istringstream hs(next());
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != kCheckpointMagic) bad("not an emgmoe checkpoint");
    if (version != kCheckpointVersion) bad("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  std::uint64_t seed = 0;
  while (true) {
    next();
    if (line.rfind("meta ", 0) == 0) {
      const auto rest = line.substr(5);
      const auto sp = rest.find(' ');
      if (sp == std::string::npos) bad("malformed meta line");
      ck.meta[rest.substr(0, sp)] = rest.substr(sp + 1);
      continue;
    }
    std::istringstream ss(line);
    std::string key;
    ss >> key >> seed;
    if (key != "seed" || ss.fail()) bad("expected 'seed'");
    break;
  }
  Shape input;
  {
    std::istringstream ss(next());
    std::string key;
    ss >> key >> input.channels >> input.length;
    if (key != "input" || ss.fail()) bad("expected 'input <channels> <length>'");
  }
  std::size_t nlayers = 0;
  {
    std::istringstream ss(next());
    std::string key;
    ss >> key >> nlayers;
    if (key != "layers" || ss.fail()) bad("expected 'layers <count>'");
  }
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < nlayers; ++i) layers.push_back(parse_layer(next()));
  std::size_t nparams = 0;
  {
    std::istringstream ss(next());
    std::string key;
    ss >> key >> nparams;
    if (key != "params" || ss.fail()) bad("expected 'params <count>'");
  }
  Model m(input, std::move(layers), seed);
  if (m.num_params() != nparams) bad("parameter count does not match layers");
  std::vector<double> params(nparams);
  for (std::size_t i = 0; i < nparams; ++i) {
    if (!parse_double(next(), params[i])) bad("non-numeric parameter");
  }
  m.set_params(std::move(params));
  ck.model = std::move(m);
  return ck;
}

inline void save_checkpoint(const std::string& path, const Model& m, const Metadata& meta = {}) {
  write_file(path, serialize_checkpoint(m, meta));
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace emgmoe::nn
