#include "scinv/scenario.hpp"

#include <algorithm>
#include <array>
#include <string_view>
#include <utility>

namespace scinv {

namespace {

struct PresetEntry {
    std::string_view name;
    std::string_view text;
};

// Shipped preset documents, embedded at build time from scenarios/.
constexpr PresetEntry kPresets[] = {
#include "scinv_presets.inc"
};

const PresetEntry* find_preset(const std::string& name) {
    for (const auto& p : kPresets) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

}  // namespace

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

bool is_preset(const std::string& name) { return find_preset(name) != nullptr; }

std::string preset_source(const std::string& name) {
    const PresetEntry* p = find_preset(name);
    if (!p) throw ScenarioError(name, "no such preset");
    return std::string(p->text);
}

Scenario preset(const std::string& name) {
    return parse_scenario(preset_source(name), "preset " + name);
}

}  // namespace scinv
