#ifndef PGLD_RNG_HPP
#define PGLD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pgld {

// Counter-based stream (Philox4x32-10).  Keyed by (master_seed, sample_index,
// step_index) so any parallel schedule replays identical numbers: each
// (sample, step) pair owns an independent substream.
class RngStream {
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t sample_index, std::uint64_t step_index = 0)
        : master_seed_(master_seed), sample_(sample_index) {
        set_step(step_index);
    }

    void set_step(std::uint64_t step_index) {
        step_ = step_index;
        draw_ = 0;
        have_spare_ = false;
        buf_pos_ = 4;
    }

    std::uint64_t step() const { return step_; }

    // uniform in (0,1), never exactly 0
    double uniform() {
        std::uint32_t hi = next_u32(), lo = next_u32();
        std::uint64_t u = (std::uint64_t(hi) << 32) | lo;
        return (double(u >> 11) + 0.5) * 0x1.0p-53;
    }

    // standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint32_t next_u32() {
        if (buf_pos_ >= 4) {
            fill_block();
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    static void philox_round(std::uint32_t c[4], std::uint32_t k0, std::uint32_t k1) {
        std::uint64_t p0 = std::uint64_t(0xD2511F53u) * c[0];
        std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * c[2];
        std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        std::uint32_t n0 = hi1 ^ c[1] ^ k0;
        std::uint32_t n1 = lo1;
        std::uint32_t n2 = hi0 ^ c[3] ^ k1;
        std::uint32_t n3 = lo0;
        c[0] = n0; c[1] = n1; c[2] = n2; c[3] = n3;
    }

    void fill_block() {
        std::uint32_t c[4] = {
            std::uint32_t(draw_), std::uint32_t(draw_ >> 32),
            std::uint32_t(step_), std::uint32_t(step_ >> 32)};
        std::uint32_t k0 = std::uint32_t(master_seed_ ^ sample_);
        std::uint32_t k1 = std::uint32_t((master_seed_ >> 32) ^ (sample_ * 0x9E3779B97F4A7C15ull >> 32));
        for (int r = 0; r < 10; ++r) {
            philox_round(c, k0, k1);
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_[0] = c[0]; buf_[1] = c[1]; buf_[2] = c[2]; buf_[3] = c[3];
        ++draw_;
    }

    std::uint64_t master_seed_, sample_, step_ = 0, draw_ = 0;
    std::uint32_t buf_[4] = {};
    int buf_pos_ = 4;
    bool have_spare_ = false;
    double spare_ = 0;
};

}  // namespace pgld

#endif
