#include "sspdsim/sessions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "sspdsim/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sspdsim {

namespace {

constexpr std::uint64_t kBlockSlots = 1ull << 22;

int worker_count() {
#ifdef _OPENMP
    return std::max(1, omp_get_max_threads());
#else
    return 1;
#endif
}

// Dark patterns for a two-detector receiver, resolved from one uniform.
struct DarkSplit {
    double thr_only0 = 0.0;
    double thr_only1 = 0.0;
    double p_any = 0.0;

    explicit DarkSplit(double p_det = 0.0) {
        const double p0 = p_det, p1 = p_det;
        thr_only0 = p0 * (1.0 - p1);
        thr_only1 = thr_only0 + p1 * (1.0 - p0);
        p_any = 1.0 - (1.0 - p0) * (1.0 - p1);
    }

    std::uint8_t resolve(double u) const {
        if (u >= p_any) return 0;
        if (u < thr_only0) return 1;
        if (u < thr_only1) return 2;
        return 3;
    }

    // Pattern conditioned on at least one detector firing.
    std::uint8_t resolve_given_any(double u) const {
        const double v = u * p_any;
        if (v < thr_only0) return 1;
        if (v < thr_only1) return 2;
        return 3;
    }
};

// ---------------------------------------------------------------------------
// BB84

struct Bb84Derived {
    double period_ns = 0.0;
    double gate_ns = 0.0;
    double t_channel = 0.0;
    double eta_det_set = 0.0;  // DE(set bias) * polarization coupling
    double sigma_ns = 0.0;
    Rng::PoissonInv lambda[3];
    double cum_signal = 0.0;
    double cum_decoy = 0.0;
    double p_dark_det = 0.0;
    DarkSplit dark;

    explicit Bb84Derived(const Bb84SessionSpec& spec) {
        period_ns = 1e9 / spec.clock_rate_hz;
        gate_ns = period_ns * spec.gate_fraction;
        t_channel = fiber_transmittance(spec.channel);
        eta_det_set = efficiency_at_bias(spec.device, spec.bias_ratio, spec.wavelength_nm) *
                      spec.device.polarization_coupling;
        sigma_ns = spec.device.jitter_fwhm_ps / kFwhmPerSigma * 1e-3;
        lambda[0] = Rng::PoissonInv(spec.mu);
        lambda[1] = Rng::PoissonInv(spec.nu);
        lambda[2] = Rng::PoissonInv(0.0);
        cum_signal = spec.p_signal;
        cum_decoy = spec.p_signal + spec.p_decoy;
        const double rate = dark_rate_at_bias(spec.device, spec.bias_ratio);
        p_dark_det = 1.0 - std::exp(-rate * gate_ns * 1e-9);
        dark = DarkSplit(p_dark_det);
    }
};

struct Bb84Candidate {
    std::uint64_t slot = 0;
    std::uint8_t label = 0;
    std::uint8_t n_emitted = 0;
    std::uint8_t n_survived = 0;
    std::uint8_t alice_bit = 0;
    std::uint8_t alice_basis = 0;
    std::uint8_t bob_basis = 0;
    std::uint8_t dark_mask = 0;
};

// Phase A: everything that is independent of detector state, drawn from the
// slot's own counter stream. Returns false for slots where nothing reaches
// the receiver and no dark fires.
inline bool sample_bb84_slot(const Bb84Derived& dv, std::uint64_t seed, std::uint64_t slot,
                             Bb84Candidate& out, std::uint64_t sent[3]) {
    Rng s = Rng::at(seed, RngStream::source, slot);
    const double u_int = s.uniform();
    const int label = u_int < dv.cum_signal ? 0 : (u_int < dv.cum_decoy ? 1 : 2);
    ++sent[label];

    const std::uint32_t n = dv.lambda[label].sample(s.uniform());
    std::uint32_t m = 0;
    for (std::uint32_t i = 0; i < n; ++i) m += s.bernoulli(dv.t_channel) ? 1u : 0u;

    const std::uint8_t dark_mask = dv.dark.resolve(s.uniform());
    if (m == 0 && dark_mask == 0) return false;

    const std::uint64_t bits = s.next_u64();
    out.slot = slot;
    out.label = static_cast<std::uint8_t>(label);
    out.n_emitted = static_cast<std::uint8_t>(std::min<std::uint32_t>(n, 255));
    out.n_survived = static_cast<std::uint8_t>(std::min<std::uint32_t>(m, 255));
    out.alice_bit = bits & 1;
    out.alice_basis = (bits >> 1) & 1;
    out.bob_basis = (bits >> 2) & 1;
    out.dark_mask = dark_mask;
    return true;
}

// Phase B: detector-state-dependent detection, processed in slot order. All
// randomness comes from the slot's detection stream, so the serial reference
// and the blocked parallel kernel consume identical draws.
class Bb84Detection {
public:
    Bb84Detection(const Bb84SessionSpec& spec, const Bb84Derived& dv, std::uint64_t seed,
                  Bb84Tally& tally, EventLog* log)
        : spec_(spec), dv_(dv), seed_(seed), tally_(tally), log_(log) {
        det_[0].bias_ratio_set = spec.bias_ratio;
        det_[1].bias_ratio_set = spec.bias_ratio;
    }

    void apply(const Bb84Candidate& c) {
        Rng d = Rng::at(seed_, RngStream::detection, c.slot);
        const double t_slot = static_cast<double>(c.slot) * dv_.period_ns;

        double de[2];
        for (int k = 0; k < 2; ++k) de[k] = det_[k].latched ? 0.0 : efficiency_now(k, t_slot);

        bool photon_click[2] = {false, false};
        for (std::uint32_t i = 0; i < c.n_survived; ++i) {
            int target;
            if (c.bob_basis == c.alice_basis)
                target = c.alice_bit ^ (d.bernoulli(spec_.misalignment) ? 1 : 0);
            else
                target = d.bernoulli(0.5) ? 1 : 0;
            if (d.bernoulli(de[target])) photon_click[target] = true;
        }

        bool dark_click[2] = {false, false};
        double dark_time[2] = {0.0, 0.0};
        for (int k = 0; k < 2; ++k) {
            if (!(c.dark_mask >> k & 1) || det_[k].latched) continue;
            bool accept = true;
            if (det_[k].last_fire_time_ns) {
                const double b = recovered_bias(spec_.device, spec_.bias_ratio,
                                                t_slot - *det_[k].last_fire_time_ns);
                accept = d.bernoulli(
                    std::exp(spec_.device.dark_anchor.slope_k * (b - spec_.bias_ratio)));
            }
            if (accept) {
                dark_click[k] = true;
                dark_time[k] = t_slot + (d.uniform() - 0.5) * dv_.gate_ns;
            }
        }

        bool gated[2] = {false, false};
        bool any_click = false;
        for (int k = 0; k < 2; ++k) {
            if (!photon_click[k] && !dark_click[k]) continue;
            any_click = true;
            double time;
            ClickCause cause;
            if (photon_click[k]) {
                time = t_slot + d.gaussian(0.0, dv_.sigma_ns);
                cause = ClickCause::photon;
                det_[k].last_fire_time_ns = t_slot;
                ++tally_.photon_clicks;
            } else {
                time = dark_time[k];
                cause = ClickCause::dark;
                det_[k].last_fire_time_ns = time;
                ++tally_.dark_clicks;
            }
            if (spec_.device.latching_enabled) det_[k].latched = true;

            const TimeBin bin = assign_time_bin(time, spec_.clock_rate_hz, spec_.gate_fraction);
            const bool in_gate =
                bin.within_gate && bin.slot_index == static_cast<std::int64_t>(c.slot);
            if (in_gate)
                gated[k] = true;
            else
                ++tally_.out_of_gate;
            if (log_)
                log_->events.push_back(DetectionEvent{time, k, cause, bin.slot_index});
        }

        auto& it = tally_.intensity[c.label];
        const int n_gated = (gated[0] ? 1 : 0) + (gated[1] ? 1 : 0);
        if (n_gated > 0) {
            ++it.clicked;
            if (n_gated == 2) ++tally_.double_clicks;
            if (c.bob_basis == c.alice_basis) {
                int bit;
                if (n_gated == 2)
                    bit = d.bernoulli(0.5) ? 1 : 0;
                else
                    bit = gated[1] ? 1 : 0;
                ++it.sifted;
                if (bit != c.alice_bit) ++it.errors;
            }
        }
        if (log_ && any_click) {
            EmissionRecord em;
            em.slot = static_cast<std::int64_t>(c.slot);
            em.intensity = static_cast<IntensityLabel>(c.label);
            em.basis = static_cast<Basis>(c.alice_basis);
            em.bit = c.alice_bit;
            em.n_emitted = c.n_emitted;
            em.n_arrived = c.n_survived;
            log_->emissions.push_back(em);
        }
    }

private:
    double efficiency_now(int k, double t_slot) const {
        if (!det_[k].last_fire_time_ns) return dv_.eta_det_set;
        const double b =
            recovered_bias(spec_.device, spec_.bias_ratio, t_slot - *det_[k].last_fire_time_ns);
        return efficiency_at_bias(spec_.device, b, spec_.wavelength_nm) *
               spec_.device.polarization_coupling;
    }

    const Bb84SessionSpec& spec_;
    const Bb84Derived& dv_;
    std::uint64_t seed_;
    Bb84Tally& tally_;
    EventLog* log_;
    DetectorState det_[2];
};

// ---------------------------------------------------------------------------
// BBM92

constexpr int kMaxPhotonsPerWindow = 16;

struct Bbm92Photon {
    std::uint8_t side = 0;
    std::uint8_t out_z = 0;
    std::uint8_t out_x = 0;
    std::uint16_t pair = 0;
};

struct Bbm92Candidate {
    std::uint64_t window = 0;
    std::uint8_t basis_a = 0;
    std::uint8_t basis_b = 0;
    std::uint8_t dark_a = 0;
    std::uint8_t dark_b = 0;
    std::uint8_t n_photons = 0;
    std::uint8_t n_pairs = 0;
    Bbm92Photon photons[kMaxPhotonsPerWindow];
};

struct Bbm92Derived {
    double period_ns = 0.0;
    double gate_ns = 0.0;
    double sigma_ns[2] = {0.0, 0.0};
    double eta_thin[2] = {0.0, 0.0};  // arm transmittance * DE(set) * coupling
    double de_set[2] = {0.0, 0.0};
    double p_dark[2] = {0.0, 0.0};
    DarkSplit dark[2];
    Rng::PoissonInv pairs;
    // One-uniform decomposition of which sides saw darks this window.
    double p_no_dark = 1.0;
    double thr_a_only = 1.0;
    double thr_b_only = 1.0;

    explicit Bbm92Derived(const Bbm92SessionSpec& spec) {
        pairs = Rng::PoissonInv(spec.mean_pairs);
        period_ns = 1e9 / spec.clock_rate_hz;
        gate_ns = period_ns * spec.gate_fraction;
        const DeviceProfile* dev[2] = {&spec.device_a, &spec.device_b};
        const ChannelSpec* arm[2] = {&spec.arm_a, &spec.arm_b};
        for (int s = 0; s < 2; ++s) {
            sigma_ns[s] = dev[s]->jitter_fwhm_ps / kFwhmPerSigma * 1e-3;
            de_set[s] = efficiency_at_bias(*dev[s], spec.bias_ratio, spec.wavelength_nm) *
                        dev[s]->polarization_coupling;
            eta_thin[s] = fiber_transmittance(*arm[s]) * de_set[s];
            const double rate = dark_rate_at_bias(*dev[s], spec.bias_ratio);
            p_dark[s] = 1.0 - std::exp(-rate * gate_ns * 1e-9);
            dark[s] = DarkSplit(p_dark[s]);
        }
        p_no_dark = (1.0 - dark[0].p_any) * (1.0 - dark[1].p_any);
        thr_a_only = p_no_dark + dark[0].p_any * (1.0 - dark[1].p_any);
        thr_b_only = thr_a_only + dark[1].p_any * (1.0 - dark[0].p_any);
    }
};

// Phase A for one pump window. Photon detection probability is folded into
// the survival thinning here (channel * DE at set bias); phase B accepts each
// survivor with DE(recovered)/DE(set), which keeps the chain exact while the
// candidate rate stays sparse enough for multi-gigaslot sessions.
inline bool sample_bbm92_window(const Bbm92SessionSpec& spec, const Bbm92Derived& dv,
                                std::uint64_t seed, std::uint64_t window, Bbm92Candidate& out,
                                std::uint64_t& pairs_acc, std::uint64_t& multi_acc,
                                std::uint64_t& overflow_acc) {
    Rng s = Rng::at(seed, RngStream::pair_source, window);
    const std::uint32_t k = dv.pairs.sample(s.uniform());
    pairs_acc += k;
    if (k > 1) ++multi_acc;

    std::uint8_t np = 0;
    auto push = [&](std::uint8_t side, std::uint8_t oz, std::uint8_t ox, std::uint32_t pair) {
        if (np < kMaxPhotonsPerWindow) {
            out.photons[np++] = Bbm92Photon{side, oz, ox, static_cast<std::uint16_t>(pair)};
        } else {
            ++overflow_acc;
        }
    };
    for (std::uint32_t j = 0; j < k; ++j) {
        const bool sa = s.bernoulli(dv.eta_thin[0]);
        const bool sb = s.bernoulli(dv.eta_thin[1]);
        if (!sa && !sb) continue;
        const std::uint64_t bits = s.next_u64();
        const std::uint8_t vz = bits & 1;
        const std::uint8_t vx = (bits >> 1) & 1;
        std::uint8_t fz = 0, fx = 0;
        if (sb) {
            fz = s.bernoulli(spec.visibility_error) ? 1 : 0;
            fx = s.bernoulli(spec.visibility_error) ? 1 : 0;
        }
        if (sa) push(0, vz, vx, j);
        if (sb) push(1, static_cast<std::uint8_t>((1 - vz) ^ fz),
                     static_cast<std::uint8_t>((1 - vx) ^ fx), j);
    }

    std::uint8_t dark_a = 0, dark_b = 0;
    const double u_dark = s.uniform();
    if (u_dark >= dv.p_no_dark) {
        if (u_dark < dv.thr_a_only) {
            dark_a = dv.dark[0].resolve_given_any(s.uniform());
        } else if (u_dark < dv.thr_b_only) {
            dark_b = dv.dark[1].resolve_given_any(s.uniform());
        } else {
            dark_a = dv.dark[0].resolve_given_any(s.uniform());
            dark_b = dv.dark[1].resolve_given_any(s.uniform());
        }
    }
    if (np == 0 && dark_a == 0 && dark_b == 0) return false;

    const std::uint64_t bb = s.next_u64();
    out.window = window;
    out.basis_a = bb & 1;
    out.basis_b = (bb >> 1) & 1;
    out.dark_a = dark_a;
    out.dark_b = dark_b;
    out.n_photons = np;
    out.n_pairs = static_cast<std::uint8_t>(std::min<std::uint32_t>(k, 255));
    return true;
}

class Bbm92Detection {
public:
    Bbm92Detection(const Bbm92SessionSpec& spec, const Bbm92Derived& dv, std::uint64_t seed,
                   Bbm92Tally& tally, EventLog* log)
        : spec_(spec), dv_(dv), seed_(seed), tally_(tally), log_(log) {
        for (auto& side : det_)
            for (auto& st : side) st.bias_ratio_set = spec.bias_ratio;
    }

    void apply(const Bbm92Candidate& c) {
        Rng d = Rng::at(seed_, RngStream::detection, c.window);
        const double t_win = static_cast<double>(c.window) * dv_.period_ns;
        const DeviceProfile* dev[2] = {&spec_.device_a, &spec_.device_b};

        bool photon_click[2][2] = {{false, false}, {false, false}};
        std::uint16_t click_pairs[2][8];
        int n_click_pairs[2] = {0, 0};
        for (int i = 0; i < c.n_photons; ++i) {
            const Bbm92Photon& p = c.photons[i];
            const int s = p.side;
            const std::uint8_t basis = s == 0 ? c.basis_a : c.basis_b;
            const int outcome = basis == 0 ? p.out_z : p.out_x;
            DetectorState& st = det_[s][outcome];
            if (st.latched) continue;
            bool accept = true;
            if (st.last_fire_time_ns) {
                const double b = recovered_bias(*dev[s], spec_.bias_ratio,
                                                t_win - *st.last_fire_time_ns);
                const double ratio = efficiency_at_bias(*dev[s], b, spec_.wavelength_nm) *
                                     dev[s]->polarization_coupling / dv_.de_set[s];
                accept = d.bernoulli(ratio);
            }
            if (accept) {
                photon_click[s][outcome] = true;
                if (n_click_pairs[s] < 8) click_pairs[s][n_click_pairs[s]++] = p.pair;
            }
        }

        bool dark_click[2][2] = {{false, false}, {false, false}};
        double dark_time[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
        for (int s = 0; s < 2; ++s) {
            const std::uint8_t mask = s == 0 ? c.dark_a : c.dark_b;
            for (int k = 0; k < 2; ++k) {
                if (!(mask >> k & 1) || det_[s][k].latched) continue;
                bool accept = true;
                if (det_[s][k].last_fire_time_ns) {
                    const double b = recovered_bias(*dev[s], spec_.bias_ratio,
                                                    t_win - *det_[s][k].last_fire_time_ns);
                    accept = d.bernoulli(
                        std::exp(dev[s]->dark_anchor.slope_k * (b - spec_.bias_ratio)));
                }
                if (accept) {
                    dark_click[s][k] = true;
                    dark_time[s][k] = t_win + (d.uniform() - 0.5) * dv_.gate_ns;
                }
            }
        }

        bool gated[2][2] = {{false, false}, {false, false}};
        bool side_dark[2] = {false, false};
        bool any_click = false;
        for (int s = 0; s < 2; ++s) {
            for (int k = 0; k < 2; ++k) {
                if (!photon_click[s][k] && !dark_click[s][k]) continue;
                any_click = true;
                double time;
                ClickCause cause;
                if (photon_click[s][k]) {
                    time = t_win + d.gaussian(0.0, dv_.sigma_ns[s]);
                    cause = ClickCause::photon;
                    det_[s][k].last_fire_time_ns = t_win;
                    ++tally_.photon_clicks;
                } else {
                    time = dark_time[s][k];
                    cause = ClickCause::dark;
                    det_[s][k].last_fire_time_ns = time;
                    ++tally_.dark_clicks;
                }
                if (dev[s]->latching_enabled) det_[s][k].latched = true;

                const TimeBin bin =
                    assign_time_bin(time, spec_.clock_rate_hz, spec_.gate_fraction);
                const bool in_gate =
                    bin.within_gate && bin.slot_index == static_cast<std::int64_t>(c.window);
                if (in_gate) {
                    gated[s][k] = true;
                    if (cause == ClickCause::dark) side_dark[s] = true;
                } else {
                    ++tally_.out_of_gate;
                }
                if (log_)
                    log_->events.push_back(
                        DetectionEvent{time, s * 2 + k, cause, bin.slot_index});
            }
        }

        int side_bit[2] = {-1, -1};
        for (int s = 0; s < 2; ++s) {
            const int n = (gated[s][0] ? 1 : 0) + (gated[s][1] ? 1 : 0);
            if (n == 0) continue;
            (s == 0 ? tally_.clicks_side_a : tally_.clicks_side_b)++;
            if (n == 2) {
                ++tally_.double_clicks;
                side_bit[s] = d.bernoulli(0.5) ? 1 : 0;
            } else {
                side_bit[s] = gated[s][1] ? 1 : 0;
            }
        }

        if (side_bit[0] >= 0 && side_bit[1] >= 0) {
            ++tally_.coincident;
            if (c.basis_a == c.basis_b) {
                ++tally_.sifted;
                const bool error = side_bit[0] == side_bit[1];  // anticorrelation broken
                if (error) ++tally_.errors;
                // Provenance: dark-involved beats pair bookkeeping.
                bool same_pair = false;
                for (int i = 0; i < n_click_pairs[0] && !same_pair; ++i)
                    for (int j = 0; j < n_click_pairs[1]; ++j)
                        if (click_pairs[0][i] == click_pairs[1][j]) {
                            same_pair = true;
                            break;
                        }
                if (side_dark[0] || side_dark[1]) {
                    ++tally_.sifted_accidental;
                    if (error) ++tally_.errors_accidental;
                } else if (same_pair) {
                    ++tally_.sifted_same_pair;
                    if (error) ++tally_.errors_same_pair;
                } else {
                    ++tally_.sifted_cross_pair;
                    if (error) ++tally_.errors_cross_pair;
                }
            }
        }

        if (log_ && any_click) {
            EmissionRecord em;
            em.slot = static_cast<std::int64_t>(c.window);
            em.n_emitted = c.n_pairs;
            em.n_arrived = c.n_photons;
            log_->emissions.push_back(em);
        }
    }

private:
    const Bbm92SessionSpec& spec_;
    const Bbm92Derived& dv_;
    std::uint64_t seed_;
    Bbm92Tally& tally_;
    EventLog* log_;
    DetectorState det_[2][2];
};

// ---------------------------------------------------------------------------
// Blocked drivers shared by both kernels.

// Serial reference: one fused pass in slot order, applying detection the
// moment a slot needs it. The parallel kernel below reproduces it bitwise
// because every draw comes from the slot's own counter stream and detector
// state is still applied in slot order.
template <typename Candidate, typename SampleFn, typename ApplyFn>
void run_serial_reference(std::uint64_t total, SampleFn&& sample, ApplyFn&& apply) {
    std::vector<Candidate> one;
    for (std::uint64_t slot = 0; slot < total; ++slot) {
        one.clear();
        sample(slot, slot + 1, 0, one);
        for (const auto& cand : one) apply(cand);
    }
}

// Blocked OpenMP kernel: phase A samples candidates over contiguous
// per-thread ranges, phase B applies detector state sequentially.
template <typename Candidate, typename SampleFn, typename ApplyFn>
void run_blocked(std::uint64_t total, bool parallel, SampleFn&& sample, ApplyFn&& apply) {
    if (!parallel) {
        run_serial_reference<Candidate>(total, sample, apply);
        return;
    }
    const int threads = worker_count();
    std::vector<std::vector<Candidate>> locals(static_cast<std::size_t>(threads));

    for (std::uint64_t block = 0; block < total; block += kBlockSlots) {
        const std::uint64_t end = std::min(total, block + kBlockSlots);
        const std::uint64_t len = end - block;
        if (threads == 1) {
            auto& v = locals[0];
            v.clear();
            sample(block, end, 0, v);
            for (const auto& c : v) apply(c);
            continue;
        }
#ifdef _OPENMP
#pragma omp parallel num_threads(threads)
        {
            const int tid = omp_get_thread_num();
            const std::uint64_t lo = block + len * static_cast<std::uint64_t>(tid) /
                                                 static_cast<std::uint64_t>(threads);
            const std::uint64_t hi = block + len * static_cast<std::uint64_t>(tid + 1) /
                                                 static_cast<std::uint64_t>(threads);
            auto& v = locals[static_cast<std::size_t>(tid)];
            v.clear();
            sample(lo, hi, tid, v);
        }
#endif
        for (auto& v : locals)
            for (const auto& c : v) apply(c);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

void SessionConfig::validate() const {
    std::ostringstream bad;
    auto fail = [&bad](const std::string& f) { bad << "  - " << f << "\n"; };

    auto check_device = [&](const DeviceProfile& dev, double bias, double wl) {
        try {
            dev.validate();
            efficiency_at_bias(dev, bias, wl);
        } catch (const Error& e) {
            fail(e.what());
        }
    };

    if (protocol == Protocol::bb84) {
        const auto& s = bb84;
        check_device(s.device, s.bias_ratio, s.wavelength_nm);
        if (!(s.bias_ratio > 0.0 && s.bias_ratio <= 1.0)) fail("bias_ratio: must lie in (0,1]");
        if (!(s.clock_rate_hz > 0.0)) fail("clock_rate_hz: must be > 0");
        if (!(s.gate_fraction > 0.0 && s.gate_fraction <= 1.0))
            fail("gate_fraction: must lie in (0,1]");
        if (!(s.mu > s.nu && s.nu > 0.0)) fail("intensities: need mu > nu > 0");
        if (s.p_signal < 0.0 || s.p_decoy < 0.0 || s.p_vacuum < 0.0 ||
            std::abs(s.p_signal + s.p_decoy + s.p_vacuum - 1.0) > 1e-9)
            fail("intensity probabilities: must be non-negative and sum to 1");
        if (!(s.misalignment >= 0.0 && s.misalignment <= 0.5))
            fail("misalignment: must lie in [0,0.5]");
        if (!(s.f_ec >= 1.0)) fail("f_ec: must be >= 1");
        if (!(s.q_basis > 0.0 && s.q_basis <= 1.0)) fail("q_basis: must lie in (0,1]");
        try {
            fiber_transmittance(s.channel);
        } catch (const Error& e) {
            fail(e.what());
        }
    } else {
        const auto& s = bbm92;
        check_device(s.device_a, s.bias_ratio, s.wavelength_nm);
        check_device(s.device_b, s.bias_ratio, s.wavelength_nm);
        if (!(s.bias_ratio > 0.0 && s.bias_ratio <= 1.0)) fail("bias_ratio: must lie in (0,1]");
        if (!(s.clock_rate_hz > 0.0)) fail("clock_rate_hz: must be > 0");
        if (!(s.gate_fraction > 0.0 && s.gate_fraction <= 1.0))
            fail("gate_fraction: must lie in (0,1]");
        if (!(s.mean_pairs >= 0.0)) fail("mean_pairs: must be >= 0");
        if (!(s.visibility_error >= 0.0 && s.visibility_error <= 0.5))
            fail("visibility_error: must lie in [0,0.5]");
        if (!(s.f_ec >= 1.0)) fail("f_ec: must be >= 1");
        if (!(s.q_basis > 0.0 && s.q_basis <= 1.0)) fail("q_basis: must lie in (0,1]");
        try {
            fiber_transmittance(s.arm_a);
            fiber_transmittance(s.arm_b);
        } catch (const Error& e) {
            fail(e.what());
        }
    }

    const std::string msg = bad.str();
    if (!msg.empty())
        throw ConfigError("session '" + id + "' failed validation:\n" + msg);
}

Bb84Tally run_bb84_kernel(const Bb84SessionSpec& spec, std::uint64_t seed, EventLog* log,
                          bool parallel) {
    const Bb84Derived dv(spec);
    Bb84Tally tally;
    tally.slots = spec.slots;
    if (log) {
        log->clock_rate_hz = spec.clock_rate_hz;
        log->seed = seed;
        log->total_slots = spec.slots;
        log->events.clear();
        log->emissions.clear();
    }
    Bb84Detection phase_b(spec, dv, seed, tally, log);

    const int threads = parallel ? worker_count() : 1;
    std::vector<std::array<std::uint64_t, 3>> sent(static_cast<std::size_t>(threads),
                                                   {0, 0, 0});

    run_blocked<Bb84Candidate>(
        spec.slots, parallel,
        [&](std::uint64_t lo, std::uint64_t hi, int tid, std::vector<Bb84Candidate>& out) {
            Bb84Candidate c;
            std::uint64_t local_sent[3] = {0, 0, 0};  // flushed once per range
            for (std::uint64_t slot = lo; slot < hi; ++slot)
                if (sample_bb84_slot(dv, seed, slot, c, local_sent)) out.push_back(c);
            for (int i = 0; i < 3; ++i)
                sent[static_cast<std::size_t>(tid)][static_cast<std::size_t>(i)] += local_sent[i];
        },
        [&](const Bb84Candidate& c) { phase_b.apply(c); });

    for (const auto& s : sent)
        for (int i = 0; i < 3; ++i) tally.intensity[static_cast<std::size_t>(i)].sent += s[i];

    if (log)
        std::stable_sort(log->events.begin(), log->events.end(),
                         [](const DetectionEvent& a, const DetectionEvent& b) {
                             return a.time_ns < b.time_ns;
                         });
    return tally;
}

Bbm92Tally run_bbm92_kernel(const Bbm92SessionSpec& spec, std::uint64_t seed, EventLog* log,
                            bool parallel) {
    const Bbm92Derived dv(spec);
    Bbm92Tally tally;
    tally.windows = spec.windows;
    if (log) {
        log->clock_rate_hz = spec.clock_rate_hz;
        log->seed = seed;
        log->total_slots = spec.windows;
        log->events.clear();
        log->emissions.clear();
    }
    Bbm92Detection phase_b(spec, dv, seed, tally, log);

    const int threads = parallel ? worker_count() : 1;
    struct Acc {
        std::uint64_t pairs = 0, multi = 0, overflow = 0;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(threads));

    run_blocked<Bbm92Candidate>(
        spec.windows, parallel,
        [&](std::uint64_t lo, std::uint64_t hi, int tid, std::vector<Bbm92Candidate>& out) {
            Bbm92Candidate c;
            Acc local;  // flushed once per range
            for (std::uint64_t w = lo; w < hi; ++w)
                if (sample_bbm92_window(spec, dv, seed, w, c, local.pairs, local.multi,
                                        local.overflow))
                    out.push_back(c);
            auto& a = acc[static_cast<std::size_t>(tid)];
            a.pairs += local.pairs;
            a.multi += local.multi;
            a.overflow += local.overflow;
        },
        [&](const Bbm92Candidate& c) { phase_b.apply(c); });

    for (const auto& a : acc) {
        tally.emitted_pairs += a.pairs;
        tally.multi_pair_windows += a.multi;
        tally.photon_buffer_overflow += a.overflow;
    }

    if (log)
        std::stable_sort(log->events.begin(), log->events.end(),
                         [](const DetectionEvent& a, const DetectionEvent& b) {
                             return a.time_ns < b.time_ns;
                         });
    return tally;
}

// ---------------------------------------------------------------------------
// Analytic models.

Bb84LinkModel bb84_link_model(const Bb84SessionSpec& spec) {
    const Bb84Derived dv(spec);
    Bb84LinkModel m;
    m.eta_total = dv.t_channel * dv.eta_det_set;
    m.y0 = 1.0 - (1.0 - dv.p_dark_det) * (1.0 - dv.p_dark_det);
    m.e_det = spec.misalignment;
    return m;
}

Bbm92Estimates bbm92_analytic_model(const Bbm92SessionSpec& spec) {
    const Bbm92Derived dv(spec);
    const double m = spec.mean_pairs;
    const double eta_a = dv.eta_thin[0], eta_b = dv.eta_thin[1];
    const double no_dark_a = (1.0 - dv.p_dark[0]) * (1.0 - dv.p_dark[0]);
    const double no_dark_b = (1.0 - dv.p_dark[1]) * (1.0 - dv.p_dark[1]);

    double q_c = 0.0, photon_only = 0.0, same_pair = 0.0;
    double pk = std::exp(-m);
    for (int k = 0; k <= 64; ++k) {
        if (k > 0) pk *= m / k;
        const double miss_a = std::pow(1.0 - eta_a, k);
        const double miss_b = std::pow(1.0 - eta_b, k);
        const double click_a = 1.0 - miss_a * no_dark_a;
        const double click_b = 1.0 - miss_b * no_dark_b;
        q_c += pk * click_a * click_b;
        photon_only += pk * (1.0 - miss_a) * (1.0 - miss_b) * no_dark_a * no_dark_b;
        same_pair += pk * (1.0 - std::pow(1.0 - eta_a * eta_b, k)) * no_dark_a * no_dark_b;
    }
    const double cross_pair = photon_only - same_pair;
    const double accidental = q_c - photon_only;

    Bbm92Estimates est;
    est.coincidence_gain = q_c;
    est.qber = q_c > 0.0
                   ? (spec.visibility_error * same_pair + 0.5 * (cross_pair + accidental)) / q_c
                   : 0.0;
    est.frac_same_pair = q_c > 0.0 ? same_pair / q_c : 0.0;
    est.frac_cross_pair = q_c > 0.0 ? cross_pair / q_c : 0.0;
    est.frac_accidental = q_c > 0.0 ? accidental / q_c : 0.0;
    est.sifted.per_slot = spec.q_basis * q_c;
    est.sifted.scaled_hz = est.sifted.per_slot * spec.clock_rate_hz;
    est.secure_over_sifted =
        std::max(0.0, 1.0 - (1.0 + spec.f_ec) * binary_entropy(est.qber));
    est.secure.per_slot = est.sifted.per_slot * est.secure_over_sifted;
    est.secure.scaled_hz = est.secure.per_slot * spec.clock_rate_hz;
    return est;
}

// ---------------------------------------------------------------------------
// Reports.

namespace {

Bb84Estimates bb84_estimates_from_gains(const Bb84SessionSpec& spec,
                                        const std::array<GainError, 3>& ge, double p_signal_eff) {
    Bb84Estimates est;
    est.per_intensity = ge;
    est.qber = ge[0].error_rate;
    est.sifted.per_slot = p_signal_eff * spec.q_basis * ge[0].gain;
    est.sifted.scaled_hz = est.sifted.per_slot * spec.clock_rate_hz;

    DecoyObservation obs;
    obs.q_signal = ge[0].gain;
    obs.e_signal = ge[0].error_rate;
    obs.q_decoy = ge[1].gain;
    obs.e_decoy = ge[1].error_rate;
    obs.q_vacuum = ge[2].gain;
    obs.e_vacuum = ge[2].error_rate;
    est.decoy = analyze_decoy(obs, spec.mu, spec.nu);

    const SecureRate r = secure_key_rate(obs.q_signal, obs.e_signal, est.decoy.q1_lower,
                                         est.decoy.e1_upper, spec.f_ec, spec.q_basis);
    est.insecure = r.insecure || est.decoy.insecure;
    // The GLLP rate is per signal pulse; per-slot folds in the signal fraction.
    est.secure.per_slot = p_signal_eff * r.rate_per_pulse;
    est.secure.scaled_hz = est.secure.per_slot * spec.clock_rate_hz;
    return est;
}

std::vector<CalibrationKnob> bb84_calibration(const Bb84SessionSpec& spec) {
    const Bb84Derived dv(spec);
    return {
        {"channel.length_km", spec.channel.length_km, "measured"},
        {"channel.loss_db_per_km", spec.channel.loss_db_per_km, "tuned"},
        {"channel.excess_loss_db", spec.channel.excess_loss_db, "tuned"},
        {"channel.receiver_loss_db", spec.channel.receiver_loss_db, "tuned"},
        {"clock_rate_hz", spec.clock_rate_hz, "measured"},
        {"mu", spec.mu, "measured"},
        {"nu", spec.nu, "measured"},
        {"p_signal", spec.p_signal, "convention"},
        {"p_decoy", spec.p_decoy, "convention"},
        {"p_vacuum", spec.p_vacuum, "convention"},
        {"bias_ratio", spec.bias_ratio, "tuned"},
        {"de_at_operating_bias", dv.eta_det_set, "measured"},
        {"dark_cps_per_detector", dark_rate_at_bias(spec.device, spec.bias_ratio), "measured"},
        {"jitter_fwhm_ps", spec.device.jitter_fwhm_ps, "measured"},
        {"gate_fraction", spec.gate_fraction, "tuned"},
        {"misalignment", spec.misalignment, "tuned"},
        {"f_ec", spec.f_ec, "convention"},
        {"q_basis", spec.q_basis, "convention"},
    };
}

std::vector<CalibrationKnob> bbm92_calibration(const Bbm92SessionSpec& spec) {
    const Bbm92Derived dv(spec);
    return {
        {"arm_a.length_km", spec.arm_a.length_km, "measured"},
        {"arm_b.length_km", spec.arm_b.length_km, "measured"},
        {"arm_a.loss_db_per_km", spec.arm_a.loss_db_per_km, "tuned"},
        {"arm_b.loss_db_per_km", spec.arm_b.loss_db_per_km, "tuned"},
        {"clock_rate_hz", spec.clock_rate_hz, "tuned"},
        {"mean_pairs", spec.mean_pairs, "tuned"},
        {"visibility_error", spec.visibility_error, "tuned"},
        {"bias_ratio", spec.bias_ratio, "tuned"},
        {"de_side_a", dv.de_set[0], "measured"},
        {"de_side_b", dv.de_set[1], "measured"},
        {"dark_cps_side_a", dark_rate_at_bias(spec.device_a, spec.bias_ratio), "measured"},
        {"dark_cps_side_b", dark_rate_at_bias(spec.device_b, spec.bias_ratio), "measured"},
        {"gate_fraction", spec.gate_fraction, "tuned"},
        {"f_ec", spec.f_ec, "convention"},
        {"q_basis", spec.q_basis, "convention"},
    };
}

ScalingLedger make_scaling(std::uint64_t slots, double clock_hz) {
    ScalingLedger s;
    s.simulated_slots = slots;
    s.real_clock_hz = clock_hz;
    s.equivalent_seconds = clock_hz > 0.0 ? static_cast<double>(slots) / clock_hz : 0.0;
    s.rule = "scaled_hz = per_slot_rate * real_clock_hz";
    return s;
}

}  // namespace

SessionReport bb84_session(const SessionConfig& config, std::uint64_t seed, bool parallel) {
    config.validate();
    const Bb84SessionSpec& spec = config.bb84;
    SessionReport rep;
    rep.session_id = config.id;
    rep.protocol = "bb84";
    rep.seed = seed;
    rep.slots = spec.slots;
    rep.clock_rate_hz = spec.clock_rate_hz;
    rep.bb84_tally = run_bb84_kernel(spec, seed, nullptr, parallel);

    const auto& t = rep.bb84_tally;
    std::array<GainError, 3> mc{};
    for (int i = 0; i < 3; ++i) {
        const auto& it = t.intensity[static_cast<std::size_t>(i)];
        mc[static_cast<std::size_t>(i)].gain =
            it.sent > 0 ? static_cast<double>(it.clicked) / static_cast<double>(it.sent) : 0.0;
        mc[static_cast<std::size_t>(i)].error_rate =
            it.sifted > 0 ? static_cast<double>(it.errors) / static_cast<double>(it.sifted) : 0.0;
    }
    const double p_signal_eff =
        spec.slots > 0
            ? static_cast<double>(t.intensity[0].sent) / static_cast<double>(spec.slots)
            : spec.p_signal;
    rep.bb84_mc = bb84_estimates_from_gains(spec, mc, p_signal_eff);
    // MC sifted rate comes from the actual sift tally, not the gain model.
    rep.bb84_mc->sifted.per_slot =
        spec.slots > 0
            ? static_cast<double>(t.intensity[0].sifted) / static_cast<double>(spec.slots)
            : 0.0;
    rep.bb84_mc->sifted.scaled_hz = rep.bb84_mc->sifted.per_slot * spec.clock_rate_hz;

    const Bb84LinkModel link = bb84_link_model(spec);
    std::array<GainError, 3> an{};
    const double lambdas[3] = {spec.mu, spec.nu, 0.0};
    for (int i = 0; i < 3; ++i)
        an[static_cast<std::size_t>(i)] =
            analytic_gain(lambdas[i], link.eta_total, link.y0, link.e_det);
    rep.bb84_analytic = bb84_estimates_from_gains(spec, an, spec.p_signal);

    rep.scaling = make_scaling(spec.slots, spec.clock_rate_hz);
    rep.calibration = bb84_calibration(spec);
    return rep;
}

SessionReport bbm92_session(const SessionConfig& config, std::uint64_t seed, bool parallel) {
    config.validate();
    const Bbm92SessionSpec& spec = config.bbm92;
    SessionReport rep;
    rep.session_id = config.id;
    rep.protocol = "bbm92";
    rep.seed = seed;
    rep.slots = spec.windows;
    rep.clock_rate_hz = spec.clock_rate_hz;
    rep.bbm92_tally = run_bbm92_kernel(spec, seed, nullptr, parallel);

    const auto& t = rep.bbm92_tally;
    Bbm92Estimates mc;
    mc.coincidence_gain =
        t.windows > 0 ? static_cast<double>(t.coincident) / static_cast<double>(t.windows) : 0.0;
    mc.qber = t.sifted > 0 ? static_cast<double>(t.errors) / static_cast<double>(t.sifted) : 0.0;
    mc.sifted.per_slot =
        t.windows > 0 ? static_cast<double>(t.sifted) / static_cast<double>(t.windows) : 0.0;
    mc.sifted.scaled_hz = mc.sifted.per_slot * spec.clock_rate_hz;
    mc.secure_over_sifted = std::max(0.0, 1.0 - (1.0 + spec.f_ec) * binary_entropy(mc.qber));
    mc.secure.per_slot = spec.q_basis * mc.coincidence_gain * mc.secure_over_sifted;
    mc.secure.scaled_hz = mc.secure.per_slot * spec.clock_rate_hz;
    if (t.sifted > 0) {
        mc.frac_same_pair = static_cast<double>(t.sifted_same_pair) / t.sifted;
        mc.frac_cross_pair = static_cast<double>(t.sifted_cross_pair) / t.sifted;
        mc.frac_accidental = static_cast<double>(t.sifted_accidental) / t.sifted;
    }
    rep.bbm92_mc = mc;
    rep.bbm92_analytic = bbm92_analytic_model(spec);

    rep.scaling = make_scaling(spec.windows, spec.clock_rate_hz);
    rep.calibration = bbm92_calibration(spec);
    return rep;
}

EventLog run_session(const SessionConfig& config, std::uint64_t seed, bool parallel) {
    config.validate();
    EventLog log;
    if (config.protocol == Protocol::bb84)
        run_bb84_kernel(config.bb84, seed, &log, parallel);
    else
        run_bbm92_kernel(config.bbm92, seed, &log, parallel);
    return log;
}

// ---------------------------------------------------------------------------
// JSON rendering.

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json rate_json(const RateValue& r) {
    return ordered_json{{"per_slot", r.per_slot}, {"scaled_hz", r.scaled_hz}};
}

ordered_json bb84_estimates_json(const Bb84Estimates& e) {
    static const char* names[3] = {"signal", "decoy", "vacuum"};
    ordered_json per;
    for (int i = 0; i < 3; ++i)
        per[names[i]] = ordered_json{{"gain", e.per_intensity[static_cast<std::size_t>(i)].gain},
                                     {"error_rate",
                                      e.per_intensity[static_cast<std::size_t>(i)].error_rate}};
    return ordered_json{
        {"per_intensity", per},
        {"qber", e.qber},
        {"sifted", rate_json(e.sifted)},
        {"secure", rate_json(e.secure)},
        {"decoy",
         ordered_json{{"mu", e.decoy.mu},
                      {"nu", e.decoy.nu},
                      {"y0", e.decoy.y0},
                      {"y1_lower", e.decoy.y1_lower},
                      {"e1_upper", e.decoy.e1_upper},
                      {"q1_lower", e.decoy.q1_lower},
                      {"clamped", e.decoy.clamped},
                      {"insecure", e.decoy.insecure}}},
        {"insecure", e.insecure},
    };
}

ordered_json bbm92_estimates_json(const Bbm92Estimates& e) {
    return ordered_json{
        {"coincidence_gain", e.coincidence_gain},
        {"qber", e.qber},
        {"sifted", rate_json(e.sifted)},
        {"secure", rate_json(e.secure)},
        {"secure_over_sifted", e.secure_over_sifted},
        {"error_budget",
         ordered_json{{"same_pair", e.frac_same_pair},
                      {"cross_pair", e.frac_cross_pair},
                      {"accidental", e.frac_accidental}}},
    };
}

}  // namespace

std::string report_to_json(const SessionReport& rep, int indent) {
    ordered_json j;
    j["session_id"] = rep.session_id;
    j["protocol"] = rep.protocol;
    j["seed"] = rep.seed;
    j["slots"] = rep.slots;
    j["clock_rate_hz"] = rep.clock_rate_hz;

    if (rep.protocol == "bb84") {
        const auto& t = rep.bb84_tally;
        static const char* names[3] = {"signal", "decoy", "vacuum"};
        ordered_json tallies;
        for (int i = 0; i < 3; ++i) {
            const auto& it = t.intensity[static_cast<std::size_t>(i)];
            tallies[names[i]] = ordered_json{{"sent", it.sent},
                                             {"clicked", it.clicked},
                                             {"sifted", it.sifted},
                                             {"errors", it.errors}};
        }
        j["tally"] = ordered_json{{"per_intensity", tallies},
                                  {"photon_clicks", t.photon_clicks},
                                  {"dark_clicks", t.dark_clicks},
                                  {"double_clicks", t.double_clicks},
                                  {"out_of_gate", t.out_of_gate}};
    } else {
        const auto& t = rep.bbm92_tally;
        j["tally"] = ordered_json{{"windows", t.windows},
                                  {"emitted_pairs", t.emitted_pairs},
                                  {"multi_pair_windows", t.multi_pair_windows},
                                  {"photon_clicks", t.photon_clicks},
                                  {"dark_clicks", t.dark_clicks},
                                  {"double_clicks", t.double_clicks},
                                  {"out_of_gate", t.out_of_gate},
                                  {"clicks_side_a", t.clicks_side_a},
                                  {"clicks_side_b", t.clicks_side_b},
                                  {"coincident", t.coincident},
                                  {"sifted", t.sifted},
                                  {"errors", t.errors},
                                  {"sifted_same_pair", t.sifted_same_pair},
                                  {"sifted_cross_pair", t.sifted_cross_pair},
                                  {"sifted_accidental", t.sifted_accidental},
                                  {"errors_same_pair", t.errors_same_pair},
                                  {"errors_cross_pair", t.errors_cross_pair},
                                  {"errors_accidental", t.errors_accidental}};
    }

    if (rep.bb84_mc) j["monte_carlo"] = bb84_estimates_json(*rep.bb84_mc);
    if (rep.bb84_analytic) j["analytic"] = bb84_estimates_json(*rep.bb84_analytic);
    if (rep.bbm92_mc) j["monte_carlo"] = bbm92_estimates_json(*rep.bbm92_mc);
    if (rep.bbm92_analytic) j["analytic"] = bbm92_estimates_json(*rep.bbm92_analytic);

    j["scaling"] = ordered_json{{"simulated_slots", rep.scaling.simulated_slots},
                                {"real_clock_hz", rep.scaling.real_clock_hz},
                                {"equivalent_seconds", rep.scaling.equivalent_seconds},
                                {"rule", rep.scaling.rule}};
    ordered_json knobs = ordered_json::array();
    for (const auto& k : rep.calibration)
        knobs.push_back(ordered_json{{"name", k.name}, {"value", k.value}, {"origin", k.origin}});
    j["calibration"] = knobs;
    return j.dump(indent);
}

}  // namespace sspdsim
