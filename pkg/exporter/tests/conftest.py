import json

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A tiny randomly initialized causal LM with a word-level tokenizer."""
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    words = (
        "a the of and to is was it in that time all if i believed an "
        "afterlife library would want be basically infinite do you ever "
        "feel sad about never having enough hours learn everything on "
        "your list yes often more books than lifetimes questions answers "
        "music theory harmony notes sound practice"
    ).split()
    vocab = {"[UNK]": 0, "[PAD]": 1, "[EOS]": 2}
    for word in words:
        vocab.setdefault(word, len(vocab))

    tokenizer = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        unk_token="[UNK]",
        pad_token="[PAD]",
        eos_token="[EOS]",
    )

    torch.manual_seed(1234)
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=128,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=2,
        eos_token_id=2,
    )
    model = GPT2LMHeadModel(config)

    target = tmp_path_factory.mktemp("tiny-model")
    model.save_pretrained(target)
    fast.save_pretrained(target)
    return str(target)


@pytest.fixture()
def groups_file(tmp_path):
    """Two prompts, three responses each, all with text."""

    def _write(groups):
        path = tmp_path / "groups.jsonl"
        with open(path, "w", encoding="utf-8") as out:
            for g in groups:
                out.write(json.dumps(g, ensure_ascii=False) + "\n")
        return path

    return _write


@pytest.fixture()
def sample_groups():
    return [
        {
            "prompt_id": "p0",
            "prompt": "do you ever feel sad about never having enough time to learn",
            "responses": [
                {"response_id": "r0", "text": "all the time i would want infinite hours in the library"},
                {"response_id": "r1", "text": "yes often more books than lifetimes"},
                {"response_id": "r2", "text": "never really i practice music instead"},
            ],
        },
        {
            "prompt_id": "p1",
            "prompt": "how do i learn music theory",
            "responses": [
                {"response_id": "r0", "text": "listen to the harmony and the notes"},
                {"response_id": "r1", "text": "practice every sound you can"},
            ],
        },
    ]
