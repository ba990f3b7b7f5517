#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cubewall/catalog.hpp"

using namespace cubewall;

namespace {

const char* kSample =
    "id,path,dist\n"
    "g1,/d/a.xrw,3.2\n"
    "g2,/d/b.xrw,1.1\n";

// Comparator written from the ordering rules alone: empty cells last in
// either direction, numbers by value, text by unsigned byte order, then
// file position.
bool oracle_less(const SurveyCatalog& cat, const SortSpec& spec, std::size_t a, std::size_t b) {
  for (const auto& key : spec) {
    std::size_t col = 0;
    while (cat.columns()[col] != key.field) ++col;
    const auto& x = cat.entries()[a].cells[col];
    const auto& y = cat.entries()[b].cells[col];
    if (x.empty() != y.empty()) return y.empty();
    if (x.empty()) continue;
    int cmp;
    if (cat.is_numeric(col)) {
      double dx = std::stod(x), dy = std::stod(y);
      cmp = dx < dy ? -1 : dx > dy ? 1 : 0;
    } else {
      cmp = 0;
      for (std::size_t i = 0; i < std::min(x.size(), y.size()) && cmp == 0; ++i)
        cmp = static_cast<unsigned char>(x[i]) < static_cast<unsigned char>(y[i])   ? -1
              : static_cast<unsigned char>(x[i]) > static_cast<unsigned char>(y[i]) ? 1
                                                                                    : 0;
      if (cmp == 0) cmp = x.size() < y.size() ? -1 : x.size() > y.size() ? 1 : 0;
    }
    if (key.direction == SortDirection::descending) cmp = -cmp;
    if (cmp != 0) return cmp < 0;
  }
  return a < b;
}

// Checks every pair of the result against the oracle, not just neighbours.
void expect_all_pairs_ordered(const SurveyCatalog& cat, const SortSpec& spec, const std::vector<CubeId>& ids) {
  std::vector<std::size_t> pos;
  for (const auto& id : ids) {
    std::size_t i = 0;
    while (cat.entries()[i].id() != id) ++i;
    pos.push_back(i);
  }
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j)
      ASSERT_TRUE(oracle_less(cat, spec, pos[i], pos[j])) << ids[i] << " before " << ids[j];
}

}  // namespace

TEST(Ingest, SampleCatalog) {
  auto cat = ingest_catalog(kSample);
  ASSERT_EQ(cat.size(), 2u);
  EXPECT_EQ(cat.entries()[0].id(), "g1");
  EXPECT_EQ(cat.entries()[1].path(), "/d/b.xrw");
  EXPECT_TRUE(cat.is_numeric("dist"));
  EXPECT_EQ(cat.value("g2", "dist"), json(1.1));
}

TEST(Ingest, DuplicateIdNamed) {
  try {
    ingest_catalog("id,path\ng1,a\ng1,b\n");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate ID g1"), std::string::npos);
  }
}

TEST(Ingest, RaggedRowReportsLine) {
  try {
    ingest_catalog("id,path,dist\ng1,a,1\ng2,b\n");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Ingest, MixedColumnIsText) {
  auto cat = ingest_catalog("id,path,dist\ng1,a,3.2\ng2,b,n/a\n");
  EXPECT_FALSE(cat.is_numeric("dist"));
  EXPECT_EQ(cat.value("g1", "dist"), json("3.2"));
}

TEST(Ingest, EmptyCellsDoNotBreakNumericDetection) {
  auto cat = ingest_catalog("id,path,dist\r\ng1,a,3.2\r\n\r\ng2,b,\r\n");
  EXPECT_TRUE(cat.is_numeric("dist"));
  EXPECT_TRUE(cat.value("g2", "dist").is_null());
}

TEST(Ingest, QuotedCellsAndBom) {
  auto cat = ingest_catalog("\xEF\xBB\xBFid,path,name\ng1,\"/d/x,y.xrw\",\"NGC \"\"7\"\"\"\n");
  EXPECT_EQ(cat.entries()[0].path(), "/d/x,y.xrw");
  EXPECT_EQ(cat.entries()[0].cells[2], "NGC \"7\"");
}

TEST(Ingest, NeedsIdAndPathColumns) { EXPECT_THROW(ingest_catalog("id\ng1\n"), IngestError); }

TEST(Sort, EmptySpecIsFileOrder) {
  auto cat = ingest_catalog("id,path,v\nb,x,2\na,y,1\nc,z,3\n");
  EXPECT_EQ(sort_entries(cat, {}), (std::vector<CubeId>{"b", "a", "c"}));
}

TEST(Sort, AscendingMeanDistance) {
  auto cat = ingest_catalog("id,path,MeanDistance\nn1,a,12.5\nn2,b,3\nn3,c,7.25\nn4,d,100\n");
  EXPECT_EQ(sort_entries(cat, {{"MeanDistance", SortDirection::ascending}}),
            (std::vector<CubeId>{"n2", "n3", "n1", "n4"}));
}

TEST(Sort, NumericNotLexicographic) {
  auto cat = ingest_catalog("id,path,v\na,x,10\nb,y,9\nc,z,-1e3\n");
  EXPECT_EQ(sort_entries(cat, {{"v", SortDirection::ascending}}), (std::vector<CubeId>{"c", "b", "a"}));
}

TEST(Sort, TwoKeySixRowsAgainstBruteForce) {
  auto cat = ingest_catalog(
      "id,path,type,dist\n"
      "r1,a,spiral,4\n"
      "r2,b,dwarf,9\n"
      "r3,c,spiral,11\n"
      "r4,d,,2\n"
      "r5,e,dwarf,\n"
      "r6,f,dwarf,9\n");
  SortSpec spec{{"type", SortDirection::ascending}, {"dist", SortDirection::descending}};
  auto ids = sort_entries(cat, spec);
  EXPECT_EQ(ids, (std::vector<CubeId>{"r2", "r6", "r5", "r3", "r1", "r4"}));
  expect_all_pairs_ordered(cat, spec, ids);
}

TEST(Sort, EmptyCellsLastInBothDirections) {
  auto cat = ingest_catalog("id,path,v\na,x,\nb,y,1\nc,z,2\n");
  EXPECT_EQ(sort_entries(cat, {{"v", SortDirection::ascending}}).back(), "a");
  EXPECT_EQ(sort_entries(cat, {{"v", SortDirection::descending}}).back(), "a");
}

TEST(Sort, UnknownFieldIsSpecError) {
  auto cat = ingest_catalog(kSample);
  EXPECT_THROW(sort_entries(cat, {{"nope", SortDirection::ascending}}), SortSpecError);
}

TEST(Sort, PermutationAndStabilityProperty) {
  std::mt19937 rng(42);
  std::uniform_int_distribution<int> small(0, 3);
  const char* words[] = {"", "alpha", "Beta", "beta"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string csv = "id,path,num,txt,other\n";
    int rows = 1 + trial % 25;
    for (int r = 0; r < rows; ++r) {
      int n = small(rng);
      csv += "id" + std::to_string(r) + ",p," + (n == 0 ? std::string() : std::to_string(n - 1)) + "," +
             words[small(rng)] + "," + std::to_string(small(rng)) + "\n";
    }
    auto cat = ingest_catalog(csv);
    SortSpec spec;
    for (const char* f : {"num", "txt", "other"})
      if (rng() % 2) spec.push_back({f, rng() % 2 ? SortDirection::ascending : SortDirection::descending});
    auto ids = sort_entries(cat, spec);
    auto sorted_ids = ids;
    std::sort(sorted_ids.begin(), sorted_ids.end());
    std::vector<CubeId> all;
    for (const auto& e : cat.entries()) all.push_back(e.id());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(sorted_ids, all);
    expect_all_pairs_ordered(cat, spec, ids);  // includes the file-order tie break
  }
}

TEST(Layout, EightOnWall) {
  auto g = GridConfig::make(20, 4);
  std::vector<CubeId> ids{"a", "b", "c", "d", "e", "f", "g", "h"};
  auto m = layout_order(ids, g);
  std::vector<std::string> slots;
  for (const auto& [linear, id] : m) slots.push_back(linear_to_slot(linear, g).to_string());
  EXPECT_EQ(slots, (std::vector<std::string>{"A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4"}));
  EXPECT_EQ(m.at(4), "e");
}

TEST(Layout, OneAndFull) {
  auto g = GridConfig::make(20, 4);
  auto one = layout_order({"x"}, g);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.begin()->first, 0);
  std::vector<CubeId> ids;
  for (int i = 0; i < 80; ++i) ids.push_back("c" + std::to_string(i));
  auto full = layout_order(ids, g);
  EXPECT_EQ(full.size(), 80u);
  EXPECT_EQ(full.at(slot_to_linear(SlotAddress::parse("T4"), g)), "c79");
}

TEST(Layout, OverflowCarriesCount) {
  auto g = GridConfig::make(1, 4);
  try {
    layout_order({"a", "b", "c", "d", "e", "f"}, g);
    FAIL();
  } catch (const CapacityError& e) {
    EXPECT_EQ(e.overflow(), 2u);
  }
}

TEST(Layout, SortedLayoutFillsPrefix) {
  auto cat = ingest_catalog("id,path,v\na,x,3\nb,y,1\nc,z,2\n");
  auto m = layout_order(sort_entries(cat, {{"v", SortDirection::descending}}), GridConfig::make(2, 2));
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.rbegin()->first, 2);
  EXPECT_EQ(m.at(0), "a");
}
