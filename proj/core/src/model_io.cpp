#include <fstream>

#include "ltvforge/config.hpp"
#include "ltvforge/errors.hpp"
#include "ltvforge/model.hpp"
#include "serialize.hpp"

namespace ltvforge {

using detail::json;

std::string checkpoint_to_string(const TrainedModel& model) {
    json j;
    j["format"] = "ltvforge-checkpoint-v1";
    j["build"] = build_id();
    j["model_config"] = detail::model_config_to_json(model.cfg);
    j["schema"] = detail::schema_to_json(model.schema);
    j["bucket_spec"] = detail::bucket_spec_to_json(model.spec);
    j["tau_low"] = model.tau_low;
    json tensors = json::object();
    for (const auto& t : model.net->params().tensors()) {
        std::vector<double> data(t->value.data(), t->value.data() + t->value.size());
        tensors[t->name] = json{{"rows", t->value.rows()},
                                {"cols", t->value.cols()},
                                {"data", std::move(data)}};
    }
    j["tensors"] = std::move(tensors);
    return j.dump();
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot open for write: " + path);
    file << checkpoint_to_string(model) << '\n';
    if (!file) throw InputError("write failed: " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot open: " + path);
    json j;
    try {
        j = json::parse(file);
    } catch (const json::exception& e) {
        throw MismatchError("checkpoint: invalid JSON: " + std::string(e.what()));
    }
    try {
        if (j.at("format").get<std::string>() != "ltvforge-checkpoint-v1") {
            throw MismatchError("checkpoint: unsupported format");
        }
        TrainedModel model;
        detail::model_config_from_json(j.at("model_config"), model.cfg);
        model.schema = detail::schema_from_json(j.at("schema"));
        model.spec = detail::bucket_spec_from_json(j.at("bucket_spec"));
        j.at("tau_low").get_to(model.tau_low);
        model.net = std::make_unique<CcorNet>(model.cfg, model.schema, model.spec);

        const json& tensors = j.at("tensors");
        std::size_t expected = 0;
        for (const auto& t : model.net->params().tensors()) {
            ++expected;
            if (!tensors.contains(t->name)) {
                throw MismatchError("checkpoint: missing tensor " + t->name);
            }
            const json& entry = tensors.at(t->name);
            if (entry.at("rows").get<std::size_t>() != t->value.rows() ||
                entry.at("cols").get<std::size_t>() != t->value.cols()) {
                throw MismatchError("checkpoint: shape mismatch for " + t->name);
            }
            const auto data = entry.at("data").get<std::vector<double>>();
            if (data.size() != t->value.size()) {
                throw MismatchError("checkpoint: size mismatch for " + t->name);
            }
            std::copy(data.begin(), data.end(), t->value.data());
        }
        if (tensors.size() != expected) {
            throw MismatchError("checkpoint: unexpected extra tensors");
        }
        return model;
    } catch (const json::exception& e) {
        throw MismatchError("checkpoint: malformed content: " + std::string(e.what()));
    }
}

}  // namespace ltvforge
