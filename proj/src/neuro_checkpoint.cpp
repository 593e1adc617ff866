#include "osdec/neuro/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "osdec/errors.hpp"

namespace osdec::neuro {

std::string checkpoint_to_json(
    const std::map<std::string, const ParamStore*>& stores) {
  nlohmann::json doc;
  doc["version"] = 1;
  auto& js = doc["stores"];
  for (const auto& [storeName, store] : stores) {
    auto& jstore = js[storeName];
    for (const auto& [name, tensor] : store->params()) {
      jstore[name]["shape"] = tensor.shape;
      jstore[name]["values"] = tensor.values;
    }
  }
  return doc.dump();
}

void checkpoint_from_json(const std::string& json,
                          const std::map<std::string, ParamStore*>& stores) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint parse error: ") + e.what());
  }
  if (!doc.contains("version") || doc["version"].get<int>() != 1)
    throw ValidationError("unsupported checkpoint version");
  const auto& js = doc.at("stores");
  for (const auto& [storeName, store] : stores) {
    if (!js.contains(storeName))
      throw ValidationError("checkpoint missing store '" + storeName + "'");
    const auto& jstore = js.at(storeName);
    for (auto& [name, tensor] : store->params()) {
      if (!jstore.contains(name))
        throw ValidationError("checkpoint missing tensor '" + storeName +
                              "/" + name + "'");
      const auto shape = jstore.at(name).at("shape").get<std::vector<size_t>>();
      if (shape != tensor.shape)
        throw ShapeError("checkpoint shape mismatch for '" + storeName + "/" +
                         name + "'");
      tensor.values = jstore.at(name).at("values").get<std::vector<double>>();
    }
    if (jstore.size() != store->params().size())
      throw ValidationError("checkpoint has extra tensors for store '" +
                            storeName + "'");
  }
}

void save_checkpoint(const std::string& path,
                     const std::map<std::string, const ParamStore*>& stores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint to " + path);
  out << checkpoint_to_json(stores);
}

void load_checkpoint(const std::string& path,
                     const std::map<std::string, ParamStore*>& stores) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read checkpoint from " + path);
  std::string json((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  checkpoint_from_json(json, stores);
}

}  // namespace osdec::neuro
