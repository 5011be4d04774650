#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace congan {

// One (x, y, z) observation, optionally carrying the simulated latents that
// oracle-only estimators need.
struct Record {
    double x = 0, y = 0, z = 0;
    double eta = 0, omega = 0, nu = 0, epsilon = 0;
    bool has_latents = false;
};

struct Dataset {
    std::vector<Record> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    bool has_latents() const { return !records.empty() && records.front().has_latents; }

    std::vector<double> xs() const { return column(&Record::x); }
    std::vector<double> ys() const { return column(&Record::y); }
    std::vector<double> zs() const { return column(&Record::z); }
    std::vector<double> omegas() const { return column(&Record::omega); }
    std::vector<double> etas() const { return column(&Record::eta); }

  private:
    std::vector<double> column(double Record::* field) const {
        std::vector<double> v;
        v.reserve(records.size());
        for (const auto& r : records) v.push_back(r.*field);
        return v;
    }
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    bool lat = ds.has_latents();
    out << (lat ? "x,y,z,eta,omega,nu,epsilon\n" : "x,y,z\n");
    for (const auto& r : ds.records) {
        out << format_double(r.x) << ',' << format_double(r.y) << ',' << format_double(r.z);
        if (lat)
            out << ',' << format_double(r.eta) << ',' << format_double(r.omega) << ','
                << format_double(r.nu) << ',' << format_double(r.epsilon);
        out << '\n';
    }
}

inline Dataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
    bool lat = line.find("eta") != std::string::npos;
    Dataset ds;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() < 3) throw std::runtime_error("read_csv: bad row in " + path);
        Record r;
        r.x = vals[0];
        r.y = vals[1];
        r.z = vals[2];
        if (lat && vals.size() >= 7) {
            r.eta = vals[3];
            r.omega = vals[4];
            r.nu = vals[5];
            r.epsilon = vals[6];
            r.has_latents = true;
        }
        ds.records.push_back(r);
    }
    return ds;
}

}  // namespace congan
