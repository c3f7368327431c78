import json
from pathlib import Path

from streamagent.config import SourceSpec
from streamagent.gateway import ScriptRule, TemplateId

FIXTURES = Path(__file__).parent / "fixtures"


def trigger_rules(token: str, response_label: str = "B"):
    """Oracle script: fire the trigger iff the rendered context carries token."""
    return [
        ScriptRule(template=TemplateId.BINARY_TRIGGER, contains=token, response="true"),
        ScriptRule(template=TemplateId.COT_TRIGGER, contains=token,
                   response=f"The context mentions {token}, so it is answerable. true"),
        ScriptRule(template=TemplateId.ADVERSARIAL_REJECT, contains=token, response="false"),
        ScriptRule(template=TemplateId.ADVERSARIAL_REJECT, pattern=".", response="true"),
        ScriptRule(template=TemplateId.REASONING, contains=token, response=response_label),
    ]


def write_script(path: Path, events, seed=0, fps=1):
    path.write_text(json.dumps({"seed": seed, "fps": fps, "events": events}))
    return path


def event_stream(n, text_fn=lambda t: f"tick {t}", tags_fn=lambda t: []):
    return [{"t": t, "text": text_fn(t), "tags": tags_fn(t)} for t in range(n)]


def make_script_source_spec(tmp_path: Path, events, seed=0, fps=1,
                            name="stream.json") -> SourceSpec:
    path = write_script(tmp_path / name, events, seed=seed, fps=fps)
    return SourceSpec(kind="script", path=str(path))
