use std::path::PathBuf;

use vacgrip::sim::{task_scene_file, SceneFile, TASK_IDS};

fn scenes_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

/// Set `VACGRIP_REGEN_SCENES=1` to rewrite the checked-in files.
#[test]
fn checked_in_scenes_match_builtins() {
    let regen = std::env::var_os("VACGRIP_REGEN_SCENES").is_some();
    for id in TASK_IDS {
        let path = scenes_dir().join(format!("task{id}.scene"));
        let builtin = task_scene_file(id).unwrap();
        if regen {
            std::fs::create_dir_all(scenes_dir()).unwrap();
            builtin.save(&path).unwrap();
        }
        let on_disk = SceneFile::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, builtin, "{} is stale", path.display());
        on_disk.into_scene().unwrap();
    }
}
