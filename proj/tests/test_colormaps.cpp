#include <gtest/gtest.h>

#include <fstream>

#include "cubewall/render.hpp"

using namespace cubewall;

namespace {

json load_share() {
  std::ifstream in(std::string(CUBEWALL_SOURCE_DIR) + "/share/colormaps.json");
  return json::parse(in);
}

}  // namespace

TEST(ColourMapsFile, MatchesBuiltinStops) {
  auto j = load_share();
  EXPECT_EQ(j.at("version"), 1);
  for (auto kind : {ColourMapKind::grey, ColourMapKind::heat, ColourMapKind::viridis}) {
    const auto& stops = builtin_stops(kind);
    const auto& listed = j.at("maps").at(to_string(kind));
    ASSERT_EQ(listed.size(), stops.size()) << to_string(kind);
    for (std::size_t i = 0; i < stops.size(); ++i) {
      EXPECT_NEAR(listed[i].at("position").get<double>(), stops[i].position, 1e-12);
      auto rgb = listed[i].at("rgb").get<std::vector<double>>();
      EXPECT_DOUBLE_EQ(rgb[0], stops[i].colour.r);
      EXPECT_DOUBLE_EQ(rgb[1], stops[i].colour.g);
      EXPECT_DOUBLE_EQ(rgb[2], stops[i].colour.b);
    }
  }
}

TEST(ColourMapsFile, TableFromListedStops) {
  auto j = load_share();
  for (auto& [name, listed] : j.at("maps").items()) {
    std::vector<ColourStop> stops;
    for (const auto& s : listed) {
      auto rgb = s.at("rgb").get<std::vector<double>>();
      stops.push_back({s.at("position").get<double>(), {rgb[0], rgb[1], rgb[2]}});
    }
    auto from_file = ColourMap::from_stops(stops);
    auto builtin = ColourMap::builtin(parse_colour_map(name), {});
    for (int i = 0; i < 256; ++i) {
      EXPECT_NEAR(from_file.table()[i].r, builtin.table()[i].r, 1e-12) << name << i;
      EXPECT_NEAR(from_file.table()[i].g, builtin.table()[i].g, 1e-12) << name << i;
      EXPECT_NEAR(from_file.table()[i].b, builtin.table()[i].b, 1e-12) << name << i;
    }
  }
}

TEST(ColourMapsFile, PositionsIncreaseAndCoverUnit) {
  auto j = load_share();
  for (auto& [name, listed] : j.at("maps").items()) {
    EXPECT_EQ(listed.front().at("position"), 0.0) << name;
    EXPECT_EQ(listed.back().at("position"), 1.0) << name;
    for (std::size_t i = 1; i < listed.size(); ++i)
      EXPECT_LT(listed[i - 1].at("position").get<double>(), listed[i].at("position").get<double>());
  }
}
