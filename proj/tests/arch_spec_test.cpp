// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "visnet/arch_spec.hpp"
#include "visnet/error.hpp"
#include "visnet/semantics.hpp"

using namespace visnet;

namespace {

std::uint64_t row(const ParameterTable& t, std::string_view name) {
  const auto v = t.find(name);
  EXPECT_TRUE(v.has_value()) << name;
  return v.value_or(0);
}

}  // namespace

TEST(CountLayer, ClosedForms) {
  EXPECT_EQ(count_layer({LayerKind::kConv, 3, 64, 0, 7, false}), 3u * 64 * 49);
  EXPECT_EQ(count_layer({LayerKind::kConv, 256, 2048, 0, 1, true}), 256u * 2048 + 2048);
  EXPECT_EQ(count_layer({LayerKind::kLinear, 2048, 751, 0, 1, false}), 2048u * 751);
  EXPECT_EQ(count_layer({LayerKind::kBatchNorm, 0, 512}), 1024u);
  // 1x1 (64->64) + 3x3 (64->64) + 1x1 (64->256) + three BNs + 1x1 downsample with BN.
  const std::uint64_t first = 64 * 64 + 9 * 64 * 64 + 64 * 256 + 2 * (64 + 64 + 256) + 64 * 256 + 2 * 256;
  EXPECT_EQ(count_layer({LayerKind::kBottleneck, 64, 256, 64, 1, false, true}), first);
}

TEST(CountParameters, BackboneIsStandardResNet50WithoutClassifier) {
  ArchSpec spec{{resnet50_backbone_component()}};
  EXPECT_EQ(count_parameters(spec).total, 23'508'032u);
}

TEST(CountParameters, DerivableRowsMatchReference) {
  const auto table = count_parameters(default_visnet_arch());
  for (const auto& ref : kReferenceCounts) {
    if (ref.derivable) EXPECT_EQ(row(table, ref.component), ref.parameters) << ref.component;
  }
  EXPECT_EQ(row(table, "semantic_head"), 2'628'100u);
  EXPECT_EQ(row(table, "bn_neck"), 4'096u);
  EXPECT_EQ(row(table, "classifier"), 1'538'048u);
}

TEST(CountParameters, FusionFollowsLayoutNotReference) {
  // Four 1x1 projections to 2048 with bias and BN, then 2048->512->4 attention.
  std::uint64_t expected = 0;
  for (std::uint64_t c : {256, 512, 1024, 2048}) expected += c * 2048 + 2048 + 2 * 2048;
  expected += 2048 * 512 + 512 + 512 * 4 + 4;
  const auto table = count_parameters(default_visnet_arch());
  EXPECT_EQ(row(table, "fusion"), expected);
  EXPECT_EQ(expected, 8'940'036u);
  std::uint64_t sum = 0;
  for (const auto& r : table.rows) sum += r.parameters;
  EXPECT_EQ(table.total, sum);
}

TEST(CountParameters, ScalesWithConfiguredWidths) {
  FusionConfig f;
  f.stage_channels = {4, 8, 16, 32};
  f.dim = 10;
  f.attention_hidden = 3;
  SemanticHeadConfig s;
  s.input = 10;
  s.hidden = {6, 5};
  const auto table = count_parameters(default_visnet_arch(f, s, 7));
  EXPECT_EQ(row(table, "fusion"), (4 + 8 + 16 + 32) * 10u + 4 * (10 + 20) + 10 * 3 + 3 + 3 * 4 + 4);
  EXPECT_EQ(row(table, "semantic_head"), 10u * 6 + 6 + 12 + 6 * 5 + 5 + 10 + 5 * 4 + 4);
  EXPECT_EQ(row(table, "classifier"), 70u);
  EXPECT_EQ(row(table, "bn_neck"), 20u);
}

TEST(ArchSpecText, RoundTripsDefaultLayout) {
  const ArchSpec spec = default_visnet_arch();
  std::stringstream ss;
  write_arch_spec(ss, spec);
  EXPECT_EQ(parse_arch_spec(ss), spec);
}

TEST(ArchSpecText, ParsesCommentsAndBlankLines) {
  std::istringstream in(
      "# toy\n"
      "component head\n"
      "\n"
      "  linear in=4 out=2 bias=1  # trailing\n"
      "  bn c=2\n"
      "end\n");
  const auto spec = parse_arch_spec(in);
  ASSERT_EQ(spec.components.size(), 1u);
  EXPECT_EQ(spec.components[0].name, "head");
  EXPECT_EQ(count_parameters(spec).total, 4u * 2 + 2 + 4);
}

TEST(ArchSpecText, MalformedInputReportsLine) {
  const std::pair<const char*, int> cases[] = {
      {"component a\nconv in=3 out=x k=1 bias=0\nend\n", 2},
      {"component a\nconv in=3 k=1\nend\n", 2},
      {"component a\nwidget in=1\nend\n", 2},
      {"linear in=1 out=1 bias=0\n", 1},
      {"component a\nend\ncomponent a\nend\n", 3},
      {"component a\nbn c=3 extra=1\nend\n", 2},
      {"component a\nlinear in=1 out=1 bias=2\nend\n", 2},
      {"component a\nbn c=3\n", 2},
  };
  for (const auto& [text, line] : cases) {
    std::istringstream in(text);
    try {
      parse_arch_spec(in);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << text;
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line)), std::string::npos);
    }
  }
}

TEST(ArchSpecText, MissingFileIsParseError) {
  EXPECT_THROW(load_arch_spec("/nonexistent/visnet.arch"), ParseError);
}
