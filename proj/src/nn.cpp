#include "metaadr/nn.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

namespace metaadr {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity:
      return "identity";
    case Activation::Tanh:
      return "tanh";
    case Activation::Sigmoid:
      return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw InvalidInput("unknown activation '" + name + "'");
}

nlohmann::json to_json(const MlpSpec& spec) {
  return {{"layer_sizes", spec.layer_sizes},
          {"hidden_activation", to_string(spec.hidden_activation)},
          {"output_activation", to_string(spec.output_activation)},
          {"trailing", spec.trailing}};
}

MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  spec.layer_sizes = j.at("layer_sizes").get<std::vector<Index>>();
  spec.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  spec.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  spec.trailing = j.value("trailing", Index{0});
  spec.validate();
  return spec;
}

namespace {

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::ifstream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw InvalidInput("truncated parameter file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  auto p = bin_path;
  return p.replace_extension(".json");
}

}  // namespace

void write_param_file(const std::filesystem::path& bin_path, const ParamVector& params,
                      const nlohmann::json& metadata) {
  {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + bin_path.string());
    put_u64(out, static_cast<std::uint64_t>(params.values.size()));
    for (Index i = 0; i < params.values.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(params.values[i]));
  }
  nlohmann::json side = metadata;
  side["spec"] = to_json(params.spec);
  side["length"] = params.values.size();
  std::ofstream js(sidecar_path(bin_path), std::ios::trunc);
  if (!js) throw std::runtime_error("cannot write sidecar for " + bin_path.string());
  js << side.dump(2) << '\n';
}

LoadedParams read_param_file(const std::filesystem::path& bin_path) {
  std::ifstream js(sidecar_path(bin_path));
  if (!js) throw InvalidInput("missing sidecar for " + bin_path.string());
  nlohmann::json side = nlohmann::json::parse(js);
  MlpSpec spec = mlp_spec_from_json(side.at("spec"));

  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + bin_path.string());
  const auto n = static_cast<Index>(get_u64(in));
  if (n != spec.param_count()) throw InvalidInput("parameter file length does not match its sidecar spec");
  Eigen::VectorXd values(n);
  for (Index i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_u64(in));
  side.erase("spec");
  side.erase("length");
  return {ParamVector(std::move(spec), std::move(values)), std::move(side)};
}

}  // namespace metaadr
