#pragma once

#include <string>

#include "osdec/neuro/params.hpp"

namespace osdec::neuro {

// Versioned JSON checkpoint layout:
//   {"version": 1, "stores": {"<store>": {"<tensor>": {"shape": [...],
//    "values": [...]}}}}
// Values are 64-bit floats and round-trip exactly.
std::string checkpoint_to_json(
    const std::map<std::string, const ParamStore*>& stores);
void checkpoint_from_json(const std::string& json,
                          const std::map<std::string, ParamStore*>& stores);

void save_checkpoint(const std::string& path,
                     const std::map<std::string, const ParamStore*>& stores);
void load_checkpoint(const std::string& path,
                     const std::map<std::string, ParamStore*>& stores);

}  // namespace osdec::neuro
