#include "mde/backend/checkpoint.hpp"

#include "mde/io/container.hpp"

namespace mde {

namespace {

nlohmann::json arch_to_json(const DenoiserArch& a) {
    return {{"in_channels", a.in_channels},   {"image_size", a.image_size},
            {"base_channels", a.base_channels}, {"mid_channels", a.mid_channels},
            {"text_dim", a.text_dim},          {"time_dim", a.time_dim},
            {"heads", a.heads},                {"norm_groups", a.norm_groups},
            {"train_timesteps", a.train_timesteps}, {"max_tokens", a.max_tokens}};
}

DenoiserArch arch_from_json(const nlohmann::json& j) {
    DenoiserArch a;
    a.in_channels = j.at("in_channels").get<int>();
    a.image_size = j.at("image_size").get<int>();
    a.base_channels = j.at("base_channels").get<int>();
    a.mid_channels = j.at("mid_channels").get<int>();
    a.text_dim = j.at("text_dim").get<int>();
    a.time_dim = j.at("time_dim").get<int>();
    a.heads = j.at("heads").get<int>();
    a.norm_groups = j.at("norm_groups").get<int>();
    a.train_timesteps = j.at("train_timesteps").get<int>();
    a.max_tokens = j.at("max_tokens").get<int>();
    return a;
}

}  // namespace

void save_denoiser(const std::string& path, const ToyDenoiser& model) {
    Container c;
    c.meta["kind"] = "toy_denoiser";
    c.meta["arch"] = arch_to_json(model.arch());
    c.meta["schedule"] = {{"type", "linear_alpha_bar"},
                          {"train_steps", model.schedule().train_steps()}};
    std::vector<std::string> words;
    for (int i = 0; i < model.vocab().size(); ++i)
        words.push_back(model.vocab().word_of(i));
    c.meta["vocabulary"] = words;
    c.meta["vocabulary_hash"] = model.vocab().hash();
    for (const auto* p : model.params().all())
        c.tensors.emplace_back(p->name, p->value);
    c.save(path);
}

ToyDenoiser load_denoiser(const std::string& path) {
    Container c = Container::load(path);
    if (c.meta.value("kind", "") != "toy_denoiser")
        throw IoError("not a denoiser checkpoint: " + path);
    const DenoiserArch arch = arch_from_json(c.meta.at("arch"));
    Vocabulary vocab(c.meta.at("vocabulary").get<std::vector<std::string>>());
    if (c.meta.at("vocabulary_hash").get<std::uint64_t>() != vocab.hash())
        throw IoError("vocabulary hash mismatch in " + path);

    ToyDenoiser model(arch, std::move(vocab), /*init_seed=*/0);
    for (auto* p : model.params().all()) {
        const Tensor* t = c.find(p->name);
        if (!t)
            throw IoError("checkpoint missing parameter '" + p->name + "'");
        if (t->shape() != p->value.shape())
            throw IoError("checkpoint shape mismatch for '" + p->name + "'");
        p->value = *t;
    }
    return model;
}

}  // namespace mde
