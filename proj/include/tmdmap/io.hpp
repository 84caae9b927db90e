#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmdmap/error.hpp"
#include "tmdmap/point_cloud.hpp"

namespace tmdmap {

inline constexpr const char* kVersion = "0.1.0";

/// Shortest round-tripping text for a double (printf %.17g).
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// CSV

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    class Row {
    public:
        explicit Row(CsvTable& t) : table_(t) {}
        Row& operator<<(const std::string& s) {
            cells_.push_back(s);
            return *this;
        }
        Row& operator<<(const char* s) { return *this << std::string(s); }
        Row& operator<<(double v) { return *this << format_double(v); }
        Row& operator<<(std::size_t v) { return *this << std::to_string(v); }
        Row& operator<<(int v) { return *this << std::to_string(v); }
        Row& operator<<(bool v) { return *this << std::string(v ? "1" : "0"); }
        ~Row() { table_.add(std::move(cells_)); }

    private:
        CsvTable& table_;
        std::vector<std::string> cells_;
    };

    Row row() { return Row(*this); }

    void add(std::vector<std::string> cells) {
        if (cells.size() != header_.size()) throw DimensionError("csv row has wrong number of cells");
        rows_.push_back(std::move(cells));
    }

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }

    /// Column index by name.
    std::size_t column(const std::string& name) const {
        auto it = std::find(header_.begin(), header_.end(), name);
        if (it == header_.end()) throw DomainError("csv has no column '" + name + "'");
        return static_cast<std::size_t>(it - header_.begin());
    }

    void write(std::ostream& os) const {
        auto line = [&os](const std::vector<std::string>& cells) {
            for (std::size_t k = 0; k < cells.size(); ++k) {
                if (k) os << ',';
                const std::string& c = cells[k];
                if (c.find_first_of(",\"\n") != std::string::npos) {
                    os << '"';
                    for (char ch : c) os << (ch == '"' ? std::string("\"\"") : std::string(1, ch));
                    os << '"';
                } else {
                    os << c;
                }
            }
            os << '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
    }

    std::string str() const {
        std::ostringstream os;
        write(os);
        return os.str();
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DomainError("cannot write " + path.string());
        write(f);
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Point clouds as CSV: header x1,...,xm plus optional extra columns.

inline CsvTable cloud_table(const PointCloud& cloud, const std::vector<std::pair<std::string, const std::vector<double>*>>& extra = {}) {
    std::vector<std::string> header;
    for (std::size_t k = 0; k < cloud.dim(); ++k) header.push_back("x" + std::to_string(k + 1));
    for (const auto& e : extra) {
        if (e.second->size() != cloud.size()) throw DimensionError("extra column '" + e.first + "' has wrong length");
        header.push_back(e.first);
    }
    CsvTable t(header);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto r = t.row();
        for (double v : cloud[i]) r << v;
        for (const auto& e : extra) r << (*e.second)[i];
    }
    return t;
}

/// Reads the x1..xm columns of a cloud CSV; other columns are ignored.
inline PointCloud read_cloud(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot read cloud " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw DomainError("cloud file is empty: " + path.string());
    std::vector<std::size_t> cols;
    {
        std::istringstream h(line);
        std::string cell;
        for (std::size_t k = 0; std::getline(h, cell, ','); ++k) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (cell == "x" + std::to_string(cols.size() + 1)) cols.push_back(k);
        }
    }
    if (cols.empty()) throw DomainError("cloud header has no x1 column: " + path.string());
    std::vector<double> coords;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells;
        std::istringstream in(line);
        std::string cell;
        while (std::getline(in, cell, ',')) cells.push_back(cell);
        for (std::size_t c : cols) {
            if (c >= cells.size()) throw DimensionError("cloud line " + std::to_string(lineno) + " is short");
            try {
                coords.push_back(std::stod(cells[c]));
            } catch (const std::exception&) {
                throw DomainError("cloud line " + std::to_string(lineno) + ": bad number '" + cells[c] + "'");
            }
        }
    }
    return PointCloud(cols.size(), std::move(coords));
}

// ---------------------------------------------------------------------------
// Flat key = value config.
//
//   # comment
//   seed = 7
//   eps_grid = 0.023, 0.025, 0.027
//
// Keys are case-sensitive; lists are comma separated.

class Config {
public:
    Config() = default;

    static Config parse(const std::string& text) {
        Config c;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw DomainError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw DomainError("config line " + std::to_string(lineno) + ": empty key");
            c.values_[key] = trim(line.substr(eq + 1));
        }
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw DomainError("cannot read config " + path.string());
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const double v = to_double(key, it->second);
        if (!(v >= 0.0) || v != std::floor(v)) throw DomainError("config key '" + key + "' must be a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::istringstream in(it->second);
        std::string item;
        while (std::getline(in, item, ','))
            if (!trim(item).empty()) out.push_back(to_double(key, trim(item)));
        return out;
    }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return {};
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw DomainError("config key '" + key + "': '" + v + "' is not a number");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Run manifest: everything needed to repeat a run.

inline nlohmann::json make_manifest(const std::string& command, const Config& params) {
    nlohmann::json j;
    j["tool"] = "tmdmap";
    j["version"] = kVersion;
    j["command"] = command;
    j["parameters"] = params.values();
    return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DomainError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot read " + path.string());
    return nlohmann::json::parse(f);
}

/// Command and parameters stored in a manifest.
inline std::pair<std::string, Config> manifest_params(const nlohmann::json& j) {
    Config c;
    for (const auto& [k, v] : j.at("parameters").items()) c.set(k, v.get<std::string>());
    return {j.at("command").get<std::string>(), c};
}

// ---------------------------------------------------------------------------
// Minimal SVG line plot.

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    int width = 640;
    int height = 420;
};

inline std::string svg_line_plot(const std::vector<PlotSeries>& series, const PlotOptions& opt) {
    auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
            const double a = tx(s.x[k]), b = ty(s.y[k]);
            if (!std::isfinite(a) || !std::isfinite(b)) continue;
            x0 = std::min(x0, a), x1 = std::max(x1, a), y0 = std::min(y0, b), y1 = std::max(y1, b);
        }
    if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
    if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
    const double left = 70, right = 150, top = 40, bottom = 50;
    const double pw = opt.width - left - right, ph = opt.height - top - bottom;
    auto px = [&](double a) { return left + (a - x0) / (x1 - x0) * pw; };
    auto py = [&](double b) { return top + (1.0 - (b - y0) / (y1 - y0)) * ph; };
    auto esc = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            if (c == '<') o += "&lt;";
            else if (c == '>') o += "&gt;";
            else if (c == '&') o += "&amp;";
            else o += c;
        }
        return o;
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"20\" text-anchor=\"middle\">" << esc(opt.title) << "</text>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 10 << "\" text-anchor=\"middle\">"
       << esc(opt.x_label) << (opt.log_x ? " (log10)" : "") << "</text>\n";
    os << "<text x=\"15\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 15 " << top + ph / 2
       << ")\" text-anchor=\"middle\">" << esc(opt.y_label) << (opt.log_y ? " (log10)" : "") << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
        const double a = x0 + (x1 - x0) * t / 4.0, b = y0 + (y1 - y0) * t / 4.0;
        os << "<text x=\"" << px(a) << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">"
           << format_double(std::round(a * 1000) / 1000) << "</text>\n";
        os << "<text x=\"" << left - 5 << "\" y=\"" << py(b) + 4 << "\" text-anchor=\"end\">"
           << format_double(std::round(b * 1000) / 1000) << "</text>\n";
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* col = colors[s % 7];
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < std::min(series[s].x.size(), series[s].y.size()); ++k) {
            const double a = tx(series[s].x[k]), b = ty(series[s].y[k]);
            if (std::isfinite(a) && std::isfinite(b)) os << px(a) << ',' << py(b) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 15 + 16 * static_cast<double>(s) << "\" fill=\""
           << col << "\">" << esc(series[s].name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace tmdmap
