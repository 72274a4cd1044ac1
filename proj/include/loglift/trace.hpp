#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace loglift {

// One annealing phase (or chain segment) worth of bookkeeping.
// N is stored as double: thresholds from the budget formulas can exceed
// the range of long long by many orders of magnitude.
struct PhaseLogEntry {
    int index = 0;
    std::string label;
    double sigma2 = 0.0;
    double rho = 0.0;
    double h = 0.0;
    long long k = 0;
    double N = 0.0;
    long long queries = 0;
    long long proposals = 0;
    long long failures = 0;
    std::string note;
};

struct RunTrace {
    long long queries = 0;
    long long proposals = 0;
    long long failures = 0;
    std::uint64_t seed = 0;
    std::vector<PhaseLogEntry> phase_log;
    // std::map keeps keys sorted so serialized traces are deterministic.
    std::map<std::string, double> nominal_params;
    std::map<std::string, double> effective_params;
    std::vector<std::string> notes;

    void absorb(const RunTrace& other) {
        queries += other.queries;
        proposals += other.proposals;
        failures += other.failures;
        for (const auto& e : other.phase_log) phase_log.push_back(e);
        for (const auto& s : other.notes) notes.push_back(s);
    }
};

}  // namespace loglift
