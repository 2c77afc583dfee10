#include "macft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "macft/common.hpp"

namespace macft {

GradCheckReport gradcheck(const ParamRefs& params, const std::function<double()>& loss,
                          const std::function<void()>& grad, double epsilon, double tolerance,
                          int samples_per_param, std::uint64_t seed) {
    grad();  // leaves analytical gradients on the params

    GradCheckReport report;
    std::size_t param_index = 0;
    for (Param* p : params) {
        check(p->value.has_grad(), "gradcheck: parameter has no gradient buffer: ", p->name);
        GradCheckEntry entry;
        entry.name = p->name;

        std::vector<std::size_t> coords;
        const std::size_t n = p->value.size();
        if (n <= static_cast<std::size_t>(samples_per_param)) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            Rng rng = Rng::derive(seed, 0x6763u, param_index);
            for (int i = 0; i < samples_per_param; ++i) coords.push_back(rng.uniform_index(n));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }

        for (std::size_t c : coords) {
            const double saved = p->value[c];
            p->value[c] = saved + epsilon;
            const double up = loss();
            p->value[c] = saved - epsilon;
            const double down = loss();
            p->value[c] = saved;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double analytic = p->value.grad()[c];
            const double abs_err = std::fabs(numeric - analytic);
            const double scale = std::max({std::fabs(numeric), std::fabs(analytic), 1.0});
            const double rel_err = abs_err / scale;
            entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
            entry.max_rel_err = std::max(entry.max_rel_err, rel_err);
            ++entry.checked;
        }
        entry.passed = entry.max_rel_err <= tolerance;
        if (!entry.passed) report.all_passed = false;
        if (entry.max_rel_err > report.worst_rel_err) {
            report.worst_rel_err = entry.max_rel_err;
            report.worst_name = entry.name;
        }
        report.entries.push_back(std::move(entry));
        ++param_index;
    }
    return report;
}

std::string format_report(const GradCheckReport& report) {
    std::ostringstream os;
    for (const auto& e : report.entries) {
        os << (e.passed ? "ok  " : "FAIL") << "  " << e.name << "  max_rel_err=" << e.max_rel_err
           << "  max_abs_err=" << e.max_abs_err << "  coords=" << e.checked << "\n";
    }
    os << (report.all_passed ? "gradcheck passed" : "gradcheck FAILED") << " (worst "
       << report.worst_rel_err << " at " << (report.worst_name.empty() ? "-" : report.worst_name)
       << ")\n";
    return os.str();
}

}  // namespace macft
