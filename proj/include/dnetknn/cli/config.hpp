#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace dnetknn::cli {

// Line-based `key = value` file. '#' starts a comment; blank lines skipped.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap load_config(const std::filesystem::path& path);

// Key/value record written next to every output. It uses the config syntax,
// so `--config run.manifest` replays the run.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    void set(const std::string& key, const std::string& value);
    void stamp_start();
    void stamp_finish();

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::string iso_timestamp();

} // namespace dnetknn::cli
