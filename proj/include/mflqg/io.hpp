#pragma once

#include <string>
#include <vector>

#include "mflqg/simulate.hpp"
#include "mflqg/verify.hpp"

namespace mflqg {

// All numeric output uses 17 significant digits (round-trip exact for doubles).
std::string format_g17(double v);

std::string riccati_csv(const RiccatiBundle& bundle);
std::string cost_csv(const AnalyticCost& cost);
std::string paths_csv(const PathEnsemble& ensemble);
std::string errata_markdown();

// JSON mirrors of the CSV artifacts (same data, structured).
std::string riccati_json(const RiccatiBundle& bundle);
std::string cost_json(const AnalyticCost& cost);
std::string paths_json(const PathEnsemble& ensemble);

struct ManifestEntry {
    std::string name;
    size_t size = 0;
    uint64_t hash = 0;  // FNV-1a over the content
};

uint64_t fnv1a(const std::string& data);

// Writes content under dir, appends a manifest entry. Throws on I/O failure
// with path context.
void write_artifact(const std::string& dir, const std::string& name,
                    const std::string& content, std::vector<ManifestEntry>& manifest,
                    bool gzip = false);

std::string manifest_text(const std::vector<ManifestEntry>& manifest);

} // namespace mflqg
