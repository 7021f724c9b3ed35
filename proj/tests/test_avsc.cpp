#include <catch2/catch.hpp>

#include <cmath>

#include "avseg/avsc.hpp"
#include "avseg/synth.hpp"

using namespace avseg;

namespace {

AudioHead zero_head(int d, int h, int k, AudioMode mode) {
    AudioHead head;
    head.input_dim = d;
    head.hidden_dim = h;
    head.category_count = k;
    head.mode = mode;
    head.w1.assign(static_cast<std::size_t>(h) * d, 0.0);
    head.b1.assign(h, 0.0);
    head.w2.assign(static_cast<std::size_t>(k) * h, 0.0);
    head.b2.assign(k, 0.0);
    return head;
}

AudioHead random_head(Rng& rng, int d, int h, int k, AudioMode mode) {
    AudioHead head = zero_head(d, h, k, mode);
    for (double& v : head.w1) v = rng.uniform(-1.0, 1.0);
    for (double& v : head.b1) v = rng.uniform(-0.5, 0.5);
    for (double& v : head.w2) v = rng.uniform(-1.0, 1.0);
    for (double& v : head.b2) v = rng.uniform(-0.5, 0.5);
    return head;
}

InstancePrediction pred_with_argmax(MaskShape s, int k_total, int argmax_cat, double top_prob,
                                    double mask_value = 0.8) {
    InstancePrediction p;
    p.scores.probs.assign(k_total + 1, (1.0 - top_prob) / k_total);
    p.scores.probs[argmax_cat] = top_prob;
    p.mask = SoftMask(s, mask_value);
    return p;
}

}  // namespace

TEST_CASE("audio_forward normalization at zero parameters") {
    const AudioEmbedding emb(5, 0.7);
    const AudioDistribution simplex = audio_forward(zero_head(5, 3, 4, AudioMode::Simplex), emb);
    REQUIRE(simplex.probs.size() == 4);
    for (double p : simplex.probs) CHECK(p == Approx(0.25));
    const AudioDistribution indep = audio_forward(zero_head(5, 3, 4, AudioMode::Independent), emb);
    for (double p : indep.probs) CHECK(p == Approx(0.5));
}

TEST_CASE("audio_forward matches a layer-by-layer oracle") {
    Rng rng(61);
    for (AudioMode mode : {AudioMode::Simplex, AudioMode::Independent}) {
        const int d = 6, h = 5, k = 4;
        const AudioHead head = random_head(rng, d, h, k, mode);
        AudioEmbedding emb(d);
        for (double& v : emb) v = rng.uniform(-2.0, 2.0);
        const AudioDistribution out = audio_forward(head, emb);

        std::vector<double> hidden(h);
        for (int i = 0; i < h; ++i) {
            double z = head.b1[i];
            for (int j = 0; j < d; ++j) z += head.w1[i * d + j] * emb[j];
            hidden[i] = std::tanh(z);
        }
        std::vector<double> pre(k);
        for (int i = 0; i < k; ++i) {
            double z = head.b2[i];
            for (int j = 0; j < h; ++j) z += head.w2[i * h + j] * hidden[j];
            pre[i] = z;
        }
        if (mode == AudioMode::Simplex) {
            double sum = 0.0;
            for (double z : pre) sum += std::exp(z);
            for (int i = 0; i < k; ++i)
                CHECK(out.probs[i] == Approx(std::exp(pre[i]) / sum).epsilon(1e-12));
            double total = 0.0;
            for (double p : out.probs) total += p;
            CHECK(total == Approx(1.0).margin(1e-6));
        } else {
            for (int i = 0; i < k; ++i)
                CHECK(out.probs[i] == Approx(1.0 / (1.0 + std::exp(-pre[i]))).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(audio_forward(zero_head(5, 3, 4, AudioMode::Simplex), AudioEmbedding(3, 0.0)),
                    ValidationError);
}

TEST_CASE("simplex outputs sum to one on random inputs") {
    Rng rng(67);
    for (int trial = 0; trial < 30; ++trial) {
        const AudioHead head = random_head(rng, 8, 6, 5, AudioMode::Simplex);
        AudioEmbedding emb(8);
        for (double& v : emb) v = rng.uniform(-3.0, 3.0);
        double sum = 0.0;
        for (double p : audio_forward(head, emb).probs) sum += p;
        CHECK(sum == Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("category filter drops no-object predictions and keeps order") {
    const MaskShape s{3, 3};
    const int k = 4;
    std::vector<InstancePrediction> all_noobj{pred_with_argmax(s, k, 4, 0.9),
                                              pred_with_argmax(s, k, 4, 0.8)};
    CHECK(category_filter(all_noobj).empty());

    std::vector<InstancePrediction> all_real{pred_with_argmax(s, k, 0, 0.9),
                                             pred_with_argmax(s, k, 2, 0.8)};
    const auto kept = category_filter(all_real);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].scores.argmax() == 0);
    CHECK(kept[1].scores.argmax() == 2);

    std::vector<InstancePrediction> mixed{
        pred_with_argmax(s, k, 1, 0.9), pred_with_argmax(s, k, 4, 0.9),
        pred_with_argmax(s, k, 3, 0.9), pred_with_argmax(s, k, 4, 0.9),
        pred_with_argmax(s, k, 0, 0.9)};
    const auto filtered = category_filter(mixed);
    REQUIRE(filtered.size() == 3);
    CHECK(filtered[0].scores.argmax() == 1);
    CHECK(filtered[1].scores.argmax() == 3);
    CHECK(filtered[2].scores.argmax() == 0);
}

TEST_CASE("score filter keeps the best prediction per category") {
    const MaskShape s{3, 3};
    const int k = 3;
    {
        std::vector<InstancePrediction> preds{pred_with_argmax(s, k, 1, 0.9),
                                              pred_with_argmax(s, k, 1, 0.6)};
        const auto out = score_filter(preds, 0.5);
        REQUIRE(out.size() == 1);
        CHECK(out[0].category == 1);
        CHECK(out[0].confidence == Approx(0.9));
    }
    {
        std::vector<InstancePrediction> preds{pred_with_argmax(s, k, 0, 0.7),
                                              pred_with_argmax(s, k, 1, 0.8),
                                              pred_with_argmax(s, k, 2, 0.9)};
        CHECK(score_filter(preds, 0.5).size() == 3);
    }
    // group-max oracle over six predictions in three categories
    {
        Rng rng(71);
        std::vector<InstancePrediction> preds;
        std::vector<double> best(k, -1.0);
        for (int i = 0; i < 6; ++i) {
            const int cat = i % 3;
            const double conf = rng.uniform(0.5, 0.99);
            preds.push_back(pred_with_argmax(s, k, cat, conf));
            best[cat] = std::max(best[cat], conf);
        }
        const auto out = score_filter(preds, 0.5);
        REQUIRE(out.size() == 3);
        for (const auto& inst : out) CHECK(inst.confidence == Approx(best[inst.category]));
    }
    // equal confidences: the earliest prediction wins
    {
        InstancePrediction first = pred_with_argmax(s, k, 2, 0.8, 0.9);
        InstancePrediction second = pred_with_argmax(s, k, 2, 0.8, 0.1);
        const auto out = score_filter({first, second}, 0.5);
        REQUIRE(out.size() == 1);
        CHECK(area(out[0].mask) == 9);  // first's all-0.9 mask binarizes full
    }
    CHECK_THROWS_AS(score_filter({pred_with_argmax(s, k, 0, 0.9)}, 0.0), ValidationError);
    CHECK_THROWS_AS(score_filter({pred_with_argmax(s, k, 3, 0.9)}, 0.5), ValidationError);
}

TEST_CASE("score filter properties") {
    const MaskShape s{4, 4};
    Rng rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = rng.uniform_int(2, 5);
        std::vector<InstancePrediction> preds;
        const int n = rng.uniform_int(1, 10);
        for (int i = 0; i < n; ++i)
            preds.push_back(pred_with_argmax(s, k, rng.uniform_int(0, k), rng.uniform(0.4, 0.99),
                                             rng.uniform(0.1, 0.9)));
        const auto out = score_filter(category_filter(preds), 0.5);
        CHECK(out.size() <= static_cast<std::size_t>(k));
        std::vector<char> seen(k, 0);
        for (const auto& inst : out) {
            CHECK(inst.category < k);
            CHECK(!seen[inst.category]);
            seen[inst.category] = 1;
        }
    }
}

TEST_CASE("compose_localization reference values") {
    const MaskShape s{4, 4};
    BinaryMask m1(s), m2(s);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) m1.set(r, c, 1);
    for (int r = 2; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m2.set(r, c, 1);

    // single instance scales its mask by the audio probability
    {
        const LocalizationMap map = compose_localization({PotentialInstance{0, m1, 1.0}},
                                                         AudioDistribution{{0.7, 0.1}}, s);
        for (std::size_t i = 0; i < map.values.size(); ++i)
            CHECK(map.values[i] == (m1.pixels[i] ? Approx(0.7) : Approx(0.0)));
    }
    // empty instance list yields the all-zero map
    {
        const LocalizationMap map = compose_localization({}, AudioDistribution{{0.5}}, s);
        for (double v : map.values) CHECK(v == 0.0);
    }
    // two disjoint instances give a piecewise map
    {
        const LocalizationMap map =
            compose_localization({PotentialInstance{0, m1, 1.0}, PotentialInstance{1, m2, 1.0}},
                                 AudioDistribution{{0.9, 0.1}}, s);
        for (std::size_t i = 0; i < map.values.size(); ++i) {
            const double expect = m1.pixels[i] ? 0.9 : (m2.pixels[i] ? 0.1 : 0.0);
            CHECK(map.values[i] == Approx(expect));
        }
    }
    CHECK_THROWS_AS(
        compose_localization({PotentialInstance{0, m1, 1.0}, PotentialInstance{0, m2, 1.0}},
                             AudioDistribution{{0.9, 0.1}}, s),
        ValidationError);
    CHECK_THROWS_AS(compose_localization({PotentialInstance{0, BinaryMask(MaskShape{2, 2}), 1.0}},
                                         AudioDistribution{{0.9}}, s),
                    ValidationError);
    CHECK_THROWS_AS(compose_localization({PotentialInstance{3, m1, 1.0}},
                                         AudioDistribution{{0.9, 0.1}}, s),
                    ValidationError);
}

TEST_CASE("compose_localization is linear and monotone") {
    const MaskShape s{5, 5};
    Rng rng(79);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = rng.uniform_int(2, 4);
        std::vector<PotentialInstance> instances;
        for (int c = 0; c < k; ++c) {
            BinaryMask m(s);
            for (auto& px : m.pixels) px = rng.uniform() < 0.4 ? 1 : 0;
            instances.push_back(PotentialInstance{c, std::move(m), 1.0});
        }
        AudioDistribution audio;
        audio.probs.resize(k);
        // keep the doubled sum below the clamp
        for (double& p : audio.probs) p = rng.uniform(0.01, 0.5 / k);
        AudioDistribution doubled = audio;
        for (double& p : doubled.probs) p *= 2.0;
        const LocalizationMap a = compose_localization(instances, audio, s);
        const LocalizationMap b = compose_localization(instances, doubled, s);
        for (std::size_t i = 0; i < a.values.size(); ++i)
            CHECK(b.values[i] == Approx(2.0 * a.values[i]).margin(1e-12));

        // raising one probability never lowers any pixel
        AudioDistribution raised = audio;
        const int idx = rng.uniform_int(0, k - 1);
        raised.probs[idx] = std::min(1.0, raised.probs[idx] + rng.uniform(0.0, 0.5));
        const LocalizationMap c = compose_localization(instances, raised, s);
        for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(c.values[i] >= a.values[i]);
    }
}

TEST_CASE("infer wiring and suppression") {
    const MaskShape s{4, 4};
    const int k = 2;
    BinaryMask m1(s), m2(s);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) m1.set(r, c, 1);
    for (int r = 2; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m2.set(r, c, 1);
    InstancePrediction p1 = pred_with_argmax(s, k, 0, 0.9);
    p1.mask = to_soft(m1);
    InstancePrediction p2 = pred_with_argmax(s, k, 1, 0.9);
    p2.mask = to_soft(m2);
    const AudioEmbedding emb(3, 0.0);

    // silent audio: probabilities pinned near zero, empty output
    {
        AudioHead head = zero_head(3, 2, k, AudioMode::Independent);
        head.b2.assign(k, -20.0);
        const InferenceResult res = infer({p1, p2}, head, emb, 0.5, 0.5);
        CHECK(area(res.mask) == 0);
    }
    // one certain source: the final mask is that instance's mask
    {
        AudioHead head = zero_head(3, 2, k, AudioMode::Independent);
        head.b2 = {20.0, -20.0};
        const InferenceResult res = infer({p1, p2}, head, emb, 0.5, 0.5);
        CHECK(res.mask == m1);
    }
    // probabilities {0.95, 0.02}: only the first instance survives
    {
        AudioHead head = zero_head(3, 2, k, AudioMode::Independent);
        head.b2 = {std::log(0.95 / 0.05), std::log(0.02 / 0.98)};
        const InferenceResult res = infer({p1, p2}, head, emb, 0.5, 0.5);
        CHECK(res.mask == m1);
        for (std::size_t i = 0; i < res.map.values.size(); ++i)
            if (m2.pixels[i]) CHECK(res.map.values[i] == Approx(0.02).margin(1e-9));
    }
    CHECK_THROWS_AS(infer({}, zero_head(3, 2, k, AudioMode::Independent), emb, 0.5, 0.5),
                    ValidationError);
}

TEST_CASE("end-to-end suppression below the decision threshold") {
    const MaskShape s{6, 6};
    Rng rng(83);
    for (int trial = 0; trial < 10; ++trial) {
        const int k = 3;
        // disjoint masks by pixel stripes
        std::vector<InstancePrediction> preds;
        for (int c = 0; c < k; ++c) {
            InstancePrediction p = pred_with_argmax(s, k, c, 0.9);
            p.mask = SoftMask(s, 0.0);
            for (int px = 0; px < s.pixel_count(); ++px)
                if (px % k == c && rng.uniform() < 0.7) p.mask.pixels[px] = 1.0;
            preds.push_back(std::move(p));
        }
        AudioHead head = zero_head(4, 2, k, AudioMode::Independent);
        for (int c = 0; c < k; ++c) head.b2[c] = rng.uniform(-5.0, -0.2);  // sigmoid < 0.45
        const InferenceResult res = infer(preds, head, AudioEmbedding(4, 0.0), 0.5, 0.5);
        CHECK(area(res.mask) == 0);
    }
}
