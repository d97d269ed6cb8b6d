#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gasnet/network.hpp"

using namespace gasnet;

namespace {

NetworkTopology y_network() {
  PipeParameters p;
  return NetworkTopology({"in", "j", "out1", "out2"},
                         {Edge{"a", 0, 1, p}, Edge{"b", 1, 2, p}, Edge{"c", 1, 3, p}});
}

} // namespace

TEST(Incidence, SignConvention) {
  auto t = y_network();
  EXPECT_EQ(t.incidence(1, 0), 1);  // a = (in, j) ends at j
  EXPECT_EQ(t.incidence(0, 0), -1);
  EXPECT_EQ(t.incidence(2, 0), 0);
  for (std::size_t e = 0; e < t.edge_count(); ++e)
    EXPECT_EQ(t.incidence(t.edges()[e].from, e) + t.incidence(t.edges()[e].to, e), 0);
}

TEST(Classify, SinglePipe) {
  auto vc = NetworkTopology::single_pipe(PipeParameters{}).classify();
  EXPECT_TRUE(vc.interior.empty());
  EXPECT_EQ(vc.boundary, (std::vector<std::size_t>{0, 1}));
}

TEST(Classify, YJunction) {
  auto vc = y_network().classify();
  EXPECT_EQ(vc.interior, (std::vector<std::size_t>{1}));
  EXPECT_EQ(vc.boundary, (std::vector<std::size_t>{0, 2, 3}));
}

TEST(Classify, PathMiddleVertexIsInterior) {
  PipeParameters p;
  NetworkTopology t({"a", "b", "c"}, {Edge{"e0", 0, 1, p}, Edge{"e1", 1, 2, p}});
  EXPECT_EQ(t.classify().interior, (std::vector<std::size_t>{1}));
}

TEST(Topology, Handshake) {
  auto t = y_network();
  std::size_t sum = 0;
  for (std::size_t v = 0; v < t.vertex_count(); ++v) sum += t.incident(v).size();
  EXPECT_EQ(sum, 2 * t.edge_count());
}

TEST(Topology, RejectsInvalidGraphs) {
  PipeParameters p;
  EXPECT_THROW(NetworkTopology({"a", "b", "c"}, {Edge{"e", 0, 1, p}}), TopologyError);
  EXPECT_THROW(NetworkTopology({"a", "b", "c", "d"}, {Edge{"e", 0, 1, p}, Edge{"f", 2, 3, p}}), TopologyError);
  EXPECT_THROW(NetworkTopology({"a", "b"}, {Edge{"e", 0, 0, p}}), TopologyError);
  EXPECT_THROW(NetworkTopology({"a", "a"}, {Edge{"e", 0, 1, p}}), TopologyError);
  EXPECT_THROW(NetworkTopology({"a", "b"}, {Edge{"e", 0, 1, p}, Edge{"e", 1, 0, p}}), TopologyError);
}

TEST(TopologyText, RoundTrip) {
  const char* text = R"([vertices]
in j
out1 out2
[edges]
a in j length=2 area=1.5 friction=0.1
b j out1 length=1 elevation=0:0,0.5:0.25,1:0.1
c j out2 length=0.75 area=0:1,0.75:2
)";
  auto t = parse_topology(ConfigDocument::parse_string(text));
  EXPECT_EQ(t.vertex_count(), 4u);
  EXPECT_EQ(t.edges()[0].pipe.length, 2.0);
  EXPECT_EQ(t.edges()[1].pipe.elevation(0.25), 0.125);
  auto again = parse_topology(ConfigDocument::parse_string(serialize_topology(t)));
  EXPECT_TRUE(again == t);
  EXPECT_EQ(serialize_topology(again), serialize_topology(t));
}

TEST(TopologyText, LineAnchoredErrors) {
  const char* text = "[vertices]\na b\n[edges]\ne a c length=1\n";
  try {
    parse_topology(ConfigDocument::parse_string(text, "net.topo"));
    FAIL() << "expected an error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("net.topo:4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("'c'"), std::string::npos);
  }
  EXPECT_THROW(parse_topology(ConfigDocument::parse_string("[vertices]\na b\n[edges]\ne a b\n")), ConfigError);
  EXPECT_THROW(parse_topology(ConfigDocument::parse_string("[vertices]\na b\n[edges]\ne a b length=x\n")),
               ConfigError);
  EXPECT_THROW(ConfigDocument::parse_string("x = 1\n[a]\n"), ConfigError);
}

TEST(ConfigText, IncludeSplicesSections) {
  auto dir = std::filesystem::temp_directory_path() / "gasnet_include_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "net.topo") << "[vertices]\nv0 v1\n[edges]\ne0 v0 v1 length=3\n";
    std::ofstream(dir / "main.cfg") << "[scenario]\nname = x\ninclude = net.topo\n[model]\nepsilon = 0.5\n";
  }
  auto doc = ConfigDocument::parse_file(dir / "main.cfg");
  EXPECT_EQ(parse_topology(doc).edges()[0].pipe.length, 3.0);
  EXPECT_EQ(doc.entries("model").at("epsilon").first, "0.5");
  EXPECT_EQ(doc.entries("scenario").at("name").first, "x");
  std::filesystem::remove_all(dir);
}
