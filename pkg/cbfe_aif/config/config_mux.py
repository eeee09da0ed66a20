# SPDX-License-Identifier: MIT-0

import os
from abc import ABCMeta
from dataclasses import dataclass
from pathlib import Path

from aws_lambda_powertools import Logger
from yamldataclassconfig.config import YamlDataClassConfig

from cbfe_aif.config.constants import DEFAULT_PROFILE_NAME, PROFILE_ENV_VAR, SERVICE_NAME

logger = Logger(service=SERVICE_NAME, child=True)


def get_config_for_profile(profile: str, path: str) -> Path:

    default_path = Path(__file__).parent.joinpath(DEFAULT_PROFILE_NAME, path)
    if profile_name := profile or os.getenv(PROFILE_ENV_VAR):
        config_path = Path(__file__).parent.joinpath(profile_name.lower(), path)

        if not config_path.exists():
            logger.warning(f"Config file {path} for profile {profile_name} not found. Using {default_path} instead")
            config_path = default_path

        return config_path
    else:
        logger.debug(f"No profile selected, using {default_path}")
        return default_path


@dataclass
class ProfileYamlDataClassConfig(YamlDataClassConfig, metaclass=ABCMeta):
    """YAML config with profile specific file lookup under cbfe_aif/config/<profile>/."""

    def load(self):
        """
        Loads the default profile
        """
        return self.load_for_profile(None)

    def load_for_profile(self, profile):
        """
        Resolves the profile (argument, then environment) and loads the matching config file
        """
        path = get_config_for_profile(profile, Path(self.FILE_PATH).name)
        super().load(path=path, path_is_absolute=True)
        return self
