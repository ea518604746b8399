#include <stdexcept>
#include <string>

#include "umap/scenario.hpp"

namespace umap {

std::shared_ptr<const Scenario> make_metal_clash();
std::shared_ptr<const Scenario> make_monster_crisis();
std::shared_ptr<const Scenario> make_flag_capture();
std::shared_ptr<const Scenario> make_navigation_game();

std::shared_ptr<const Scenario> make_scenario(std::string_view name) {
  if (name == "metal_clash") return make_metal_clash();
  if (name == "monster_crisis") return make_monster_crisis();
  if (name == "flag_capture") return make_flag_capture();
  if (name == "navigation_game") return make_navigation_game();
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

}  // namespace umap
