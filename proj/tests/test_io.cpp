#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

#include "tmdmap/io.hpp"

using namespace tmdmap;

TEST(FormatDouble, RoundTripsAndSpecialValues) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(v)), v);
    EXPECT_EQ(format_double(NAN), "nan");
    EXPECT_EQ(format_double(-INFINITY), "-inf");
}

TEST(CsvTable, WritesHeaderRowsAndQuotes) {
    CsvTable t({"method", "eps", "n", "ok"});
    t.row() << "metad+delta-net" << 0.5 << std::size_t{12} << true;
    t.row() << "a,b" << 1.0 << 3 << false;
    EXPECT_EQ(t.str(), "method,eps,n,ok\nmetad+delta-net,0.5,12,1\n\"a,b\",1,3,0\n");
    EXPECT_EQ(t.column("n"), 2u);
    EXPECT_THROW(t.column("zzz"), DomainError);
    EXPECT_THROW(t.add({"x"}), DimensionError);
}

TEST(Config, ParsesCommentsListsAndTypes) {
    const auto c = Config::parse("# header\nseed = 7\n eps_grid = 0.1, 0.2 ,0.3 # trailing\nname=twowell\n\n");
    EXPECT_EQ(c.get_size("seed", 0), 7u);
    EXPECT_EQ(c.get("name", ""), "twowell");
    EXPECT_EQ(c.get_list("eps_grid", {}), (std::vector<double>{0.1, 0.2, 0.3}));
    EXPECT_EQ(c.get_double("missing", 2.5), 2.5);
    EXPECT_THROW(Config::parse("novalue\n"), DomainError);
    EXPECT_THROW(Config::parse("seed = abc").get_size("seed", 0), DomainError);
    EXPECT_THROW(Config::parse("seed = 1.5").get_size("seed", 0), DomainError);
}

TEST(Manifest, RoundTrip) {
    Config c;
    c.set("seed", "42");
    c.set("repeats", "3");
    const auto j = make_manifest("experiment bias-prefactor", c);
    EXPECT_EQ(j["version"], kVersion);
    const auto dir = std::filesystem::temp_directory_path() / "tmdmap_io_test";
    std::filesystem::create_directories(dir);
    write_json(dir / "manifest.json", j);
    const auto [cmd, params] = manifest_params(read_json(dir / "manifest.json"));
    EXPECT_EQ(cmd, "experiment bias-prefactor");
    EXPECT_EQ(params.values(), c.values());
    std::filesystem::remove_all(dir);
}

TEST(SvgPlot, ContainsOneLinePerSeries) {
    const std::string svg = svg_line_plot({{"a", {1, 2, 3}, {1, 4, 9}}, {"b<c", {1, 2}, {2, 2}}},
                                          {"title", "x", "y", true, true});
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::size_t count = 0;
    for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
    EXPECT_EQ(count, 2u);
    EXPECT_NE(svg.find("b&lt;c"), std::string::npos);
}

TEST(CloudCsv, RoundTripsExactly) {
    PointCloud c(2);
    const double p[2] = {0.1, -1.0 / 3.0}, r[2] = {1e-300, 2.5};
    c.push_back(p);
    c.push_back(r);
    const std::vector<double> q{0.25, 0.75};
    const auto dir = std::filesystem::temp_directory_path() / "tmdmap_cloud_test";
    std::filesystem::create_directories(dir);
    cloud_table(c, {{"q", &q}}).write(dir / "c.csv");
    EXPECT_EQ(cloud_table(c, {{"q", &q}}).header(), (std::vector<std::string>{"x1", "x2", "q"}));
    EXPECT_EQ(read_cloud(dir / "c.csv"), c);
    std::filesystem::remove_all(dir);
}
