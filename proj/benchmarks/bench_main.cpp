// Microbenchmarks for the hot paths: OTP derivation, folding, envelope
// seal/open, password hashing, and a full provider issue/verify cycle.

#include <cstdint>
#include <mutex>
#include <string>

#include <benchmark/benchmark.h>

#include "twostep/crypto.hpp"
#include "twostep/envelope.hpp"
#include "twostep/otp.hpp"
#include "twostep/provider.hpp"
#include "twostep/random.hpp"
#include "twostep/store.hpp"

namespace {

using namespace twostep;

const FactorSet& bench_factors() {
  static const FactorSet factors = FactorSet::create(
      "111111111111111", "001010123456789", "alice", "Ab3$efgh");
  return factors;
}

void BM_DeriveOtp(benchmark::State& state) {
  OtpPolicy policy;
  policy.otp_length = static_cast<std::size_t>(state.range(0));
  std::int64_t instant = 1361183820;
  for (auto _ : state) {
    benchmark::DoNotOptimize(derive_otp_at(bench_factors(), instant, 0, policy));
    ++instant;  // vary the input a little without leaving the fast path
  }
}
BENCHMARK(BM_DeriveOtp)->Arg(4)->Arg(8)->Arg(28);

void BM_Fold(benchmark::State& state) {
  const std::string b64 =
      "QmVuY2htYXJrIGlucHV0IGZvciBmb2xkaW5nLCA0M2M";  // 43 chars, unpadded
  const auto target = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fold_base64(b64, target));
  }
}
BENCHMARK(BM_Fold)->Arg(4)->Arg(8)->Arg(28);

void BM_EnvelopeSealOpen(benchmark::State& state) {
  CounterDrbg rng(1);
  SymmetricKey key = SymmetricKey::generate(rng);
  std::int64_t now = 1700000000;
  for (auto _ : state) {
    IdentityMessage msg = IdentityMessage::make(
        "111111111111111", "001010123456789", "alice", now, rng);
    Ciphertext ct = encrypt_identity(msg, key);
    auto opened = decrypt_identity(ct, key, now, 120);
    benchmark::DoNotOptimize(opened.ok());
  }
}
BENCHMARK(BM_EnvelopeSealOpen);

void BM_HashPassword(benchmark::State& state) {
  CounterDrbg rng(2);
  const int iterations = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(new_password_hash("Ab3$efgh", iterations, rng));
  }
}
BENCHMARK(BM_HashPassword)->Arg(10000)->Arg(20000)->Unit(benchmark::kMillisecond);

// Keeps only the newest SMS so the benchmark loop stays O(1) per cycle.
class LastSmsOnly final : public SmsTransport {
 public:
  void send(const SmsRecord& sms) override {
    std::lock_guard<std::mutex> lock(mutex_);
    last_body_ = sms.body;
  }
  std::string last_body() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return last_body_;
  }

 private:
  mutable std::mutex mutex_;
  std::string last_body_;
};

void BM_ProviderIssueVerify(benchmark::State& state) {
  CounterDrbg rng(3);
  LastSmsOnly outbox;
  ProviderConfig cfg;
  cfg.issue_limit = 1 << 30;  // the benchmark is not about throttling
  Provider provider(cfg, rng, outbox);
  std::int64_t now = 1700000000;
  for (auto _ : state) {
    auto issued = provider.issue_token("+15550100", now);
    std::string body = outbox.last_body();
    std::string token = body.substr(body.find_last_of(' ') + 1);
    benchmark::DoNotOptimize(
        provider.verify_token(issued.value().txid, token, now));
  }
}
BENCHMARK(BM_ProviderIssueVerify);

}  // namespace

BENCHMARK_MAIN();
