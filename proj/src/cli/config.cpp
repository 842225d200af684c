#include "dnetknn/cli/config.hpp"

#include "dnetknn/error.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

namespace dnetknn::cli {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace

ConfigMap load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path.string());
    }
    ConfigMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty key");
        }
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

RunManifest::RunManifest(std::string command) { set("command", std::move(command)); }

void RunManifest::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void RunManifest::stamp_start() { set("started_at", iso_timestamp()); }

void RunManifest::stamp_finish() { set("finished_at", iso_timestamp()); }

void RunManifest::write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) {
        out << k << " = " << v << '\n';
    }
}

void RunManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write manifest " + path.string());
    }
    write(out);
}

std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace dnetknn::cli
