#pragma once

#include <chrono>
#include <cmath>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ictx/errors.hpp"
#include "ictx/models.hpp"

namespace ictx {

// Local token id -> server token id. File format:
// {"0": id, ..., "9": id, ",": id}
struct VocabMap {
    std::array<int, kVocabSize> server_ids{};

    static VocabMap from_json(const nlohmann::json& j) {
        VocabMap map;
        for (int d = 0; d < 10; ++d) {
            const std::string key(1, static_cast<char>('0' + d));
            if (!j.contains(key)) throw param_error("vocab map: missing digit " + key);
            map.server_ids[d] = j.at(key).get<int>();
        }
        if (!j.contains(",")) throw param_error("vocab map: missing separator entry");
        map.server_ids[kSeparatorToken] = j.at(",").get<int>();
        return map;
    }

    static VocabMap identity() {
        VocabMap map;
        for (int i = 0; i < kVocabSize; ++i) map.server_ids[i] = i;
        return map;
    }
};

// HTTP client for the logit-server protocol:
//   POST /v1/next  {"cache_id": string|null, "tokens": [int]}
//        -> 200 {"logits": [float...], "cache_id": string|null}
//   POST /v1/fork  {"cache_id": string} -> 200 {"cache_id": string}
//   DELETE /v1/cache/{id} -> 204
// Servers may decline caching by returning cache_id = null; the client then
// resends the full prefix on every query.
class RemoteBackend : public ModelBackend {
  public:
    RemoteBackend(std::string base_url, VocabMap vocab, int max_retries = 3)
        : base_url_(std::move(base_url)), vocab_(vocab), max_retries_(max_retries) {}

    CacheHandle fresh() override {
        std::lock_guard lock(mu_);
        const std::uint64_t id = next_id_++;
        states_[id] = State{};
        return {id, 0};
    }

    std::pair<TokenDistribution, CacheHandle> next_distribution(const CacheHandle& cache,
                                                                Token token) override {
        if (token < 0 || token >= kVocabSize)
            throw param_error("RemoteBackend: token outside vocabulary");
        State st = snapshot(cache);

        nlohmann::json body;
        std::vector<int> sent;
        if (st.server_cache_id) {
            body["cache_id"] = *st.server_cache_id;
            sent = {vocab_.server_ids[token]};
        } else {
            body["cache_id"] = nullptr;
            for (Token t : st.tokens) sent.push_back(vocab_.server_ids[t]);
            sent.push_back(vocab_.server_ids[token]);
        }
        body["tokens"] = sent;

        const nlohmann::json reply = post_json("/v1/next", body);
        for (std::size_t i = 0; i < sent.size(); ++i) record_call();

        if (!reply.contains("logits") || !reply["logits"].is_array())
            throw protocol_error("RemoteBackend: response missing logits");
        const auto& logits = reply["logits"];
        TokenDistribution dist;
        dist.context_position = cache.prefix_len;
        double mx = -std::numeric_limits<double>::infinity();
        std::array<double, kVocabSize> raw{};
        for (int i = 0; i < kVocabSize; ++i) {
            const int sid = vocab_.server_ids[i];
            if (sid < 0 || sid >= static_cast<int>(logits.size()))
                throw protocol_error("RemoteBackend: vocab id outside server logit range");
            // NaN/Inf logits serialize as JSON null, so a non-number entry is
            // the same defect as a non-finite value
            if (!logits[sid].is_number())
                throw protocol_error("RemoteBackend: non-finite logit");
            const double l = logits[sid].get<double>();
            if (!std::isfinite(l)) throw protocol_error("RemoteBackend: non-finite logit");
            raw[i] = l;
            mx = std::max(mx, l);
        }
        double z = 0.0;
        for (int i = 0; i < kVocabSize; ++i) {
            dist.probs[i] = std::exp(raw[i] - mx);
            z += dist.probs[i];
        }
        for (double& p : dist.probs) p /= z;

        // commit only after a fully validated reply
        State next = st;
        next.tokens.push_back(token);
        next.server_cache_id = reply.contains("cache_id") && !reply["cache_id"].is_null()
                                   ? std::optional<std::string>(reply["cache_id"].get<std::string>())
                                   : std::nullopt;
        std::uint64_t id;
        {
            std::lock_guard lock(mu_);
            states_.erase(cache.id);
            id = next_id_++;
            states_[id] = std::move(next);
        }
        return {dist, CacheHandle{id, cache.prefix_len + 1}};
    }

    CacheHandle fork(const CacheHandle& cache) override {
        State st = snapshot(cache);
        if (st.server_cache_id) {
            nlohmann::json body{{"cache_id", *st.server_cache_id}};
            const nlohmann::json reply = post_json("/v1/fork", body);
            if (!reply.contains("cache_id") || reply["cache_id"].is_null())
                throw protocol_error("RemoteBackend: fork returned no cache id");
            st.server_cache_id = reply["cache_id"].get<std::string>();
        }
        record_fork();
        std::lock_guard lock(mu_);
        const std::uint64_t id = next_id_++;
        states_[id] = std::move(st);
        return {id, cache.prefix_len};
    }

    void release(const CacheHandle& cache) override {
        std::optional<std::string> server_id;
        {
            std::lock_guard lock(mu_);
            auto it = states_.find(cache.id);
            if (it == states_.end()) return;
            server_id = it->second.server_cache_id;
            states_.erase(it);
        }
        if (server_id) {
            httplib::Client cli(base_url_);
            cli.Delete(("/v1/cache/" + *server_id).c_str());  // best effort
        }
    }

  private:
    struct State {
        std::vector<Token> tokens;
        std::optional<std::string> server_cache_id;
    };

    State snapshot(const CacheHandle& cache) {
        std::lock_guard lock(mu_);
        auto it = states_.find(cache.id);
        if (it == states_.end()) throw param_error("RemoteBackend: unknown cache handle");
        return it->second;
    }

    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
        for (int attempt = 0;; ++attempt) {
            httplib::Client cli(base_url_);
            cli.set_read_timeout(30, 0);
            auto res = cli.Post(path.c_str(), body.dump(), "application/json");
            if (!res)
                throw transport_error("RemoteBackend: cannot reach " + base_url_ + path);
            if (res->status == 503) {
                if (attempt >= max_retries_)
                    throw transport_error("RemoteBackend: server busy after retries");
                std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
                continue;
            }
            if (res->status == 404) throw protocol_error("RemoteBackend: unknown cache id");
            if (res->status == 422) throw protocol_error("RemoteBackend: bad token id");
            if (res->status != 200)
                throw protocol_error("RemoteBackend: unexpected status " +
                                     std::to_string(res->status));
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception&) {
                throw protocol_error("RemoteBackend: malformed JSON response");
            }
        }
    }

    std::string base_url_;
    VocabMap vocab_;
    int max_retries_;
    std::mutex mu_;
    std::uint64_t next_id_ = 1;
    std::unordered_map<std::uint64_t, State> states_;
};

}  // namespace ictx
